#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "fedtdd/denoiser.hpp"
#include "fedtdd/error.hpp"
#include "fedtdd/fft.hpp"
#include "fedtdd/matrix.hpp"
#include "fedtdd/rng.hpp"
#include "fedtdd/schedule.hpp"

namespace fedtdd {

struct LossConfig {
    double lambda_weight = 0.01;  // scale inside the per-step weight
    double lambda_time = 1.0;
    double lambda_freq = 0.1;
};

struct TrainConfig {
    std::size_t epochs = 100;  // optimizer steps over seeded minibatches
    std::size_t batch_size = 32;
    double lr = 1e-3;
    LossConfig loss;
};

struct DiffusionModel {
    ScheduleKind schedule_kind = ScheduleKind::Cosine;
    NoiseSchedule schedule;
    Denoiser net;

    std::size_t window_len() const { return net.window_len(); }
    std::size_t channels() const { return net.channels(); }
};

inline DiffusionModel make_diffusion_model(std::size_t window_len, std::size_t channels,
                                           std::size_t hidden, std::size_t n_steps,
                                           ScheduleKind kind, std::uint64_t seed) {
    DiffusionModel m;
    m.schedule_kind = kind;
    m.schedule = make_schedule(kind, n_steps);
    m.net = Denoiser(window_len, channels, hidden, seed);
    return m;
}

inline Window unflatten(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    require(v.size() == rows * cols, "unflatten: size mismatch");
    Window w(rows, cols);
    w.data() = v;
    return w;
}

// x_t = sqrt(gamma_bar_t) x0 + sqrt(1 - gamma_bar_t) eps
inline std::vector<double> forward_diffuse(const std::vector<double>& x0, std::size_t t,
                                           const NoiseSchedule& s, Rng& rng) {
    require(t >= 1 && t <= s.n_steps, "forward_diffuse: step out of range");
    const double a = std::sqrt(s.gamma_bar[t]);
    const double b = std::sqrt(1.0 - s.gamma_bar[t]);
    std::vector<double> out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * rng.normal();
    return out;
}

inline Window forward_diffuse(const Window& x0, std::size_t t, const NoiseSchedule& s,
                              Rng& rng) {
    return unflatten(forward_diffuse(x0.data(), t, s, rng), x0.rows(), x0.cols());
}

struct ExampleLoss {
    double total = 0.0;
    double time_term = 0.0;  // unweighted
    double freq_term = 0.0;  // unweighted
};

// Loss of one example given the already-noised input x_t. The time term is a
// masked mean squared error on the prediction; the frequency term compares
// per-channel half spectra for every channel the mask touches. Both are
// scaled by the step weight. When grad is non-null the parameter gradient is
// accumulated into it (flat layout of Denoiser::params()).
inline ExampleLoss diffusion_objective(const Denoiser& net, const NoiseSchedule& sched,
                                       const LossConfig& cfg, const Window& x0,
                                       const Mask& loss_mask, std::size_t t,
                                       const std::vector<double>& x_t,
                                       std::vector<double>* grad = nullptr) {
    require(loss_mask.same_shape(x0), "diffusion_objective: mask shape mismatch");
    require(x0.rows() == net.window_len() && x0.cols() == net.channels(),
            "diffusion_objective: window shape mismatch");
    const std::size_t rows = x0.rows();
    const std::size_t cols = x0.cols();
    const std::size_t dim = rows * cols;

    ExampleLoss out;
    const std::size_t observed = loss_mask.count_observed();
    if (observed == 0) return out;

    const std::vector<double> pred_flat = net.predict(x_t, t);
    const Window pred = unflatten(pred_flat, rows, cols);
    std::vector<double> grad_pred(dim, 0.0);  // d(lambda1 Lt + lambda2 Lf)/d pred

    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            if (!loss_mask(r, c)) continue;
            const double d = x0(r, c) - pred(r, c);
            out.time_term += d * d;
            grad_pred[r * cols + c] =
                cfg.lambda_time * 2.0 * (pred(r, c) - x0(r, c)) / static_cast<double>(observed);
        }
    out.time_term /= static_cast<double>(observed);

    std::size_t active_channels = 0;
    for (std::size_t c = 0; c < cols; ++c)
        if (loss_mask.observed_in_column(c) > 0) ++active_channels;

    std::vector<double> grad_freq(dim, 0.0);
    for (std::size_t c = 0; c < cols; ++c) {
        if (loss_mask.observed_in_column(c) == 0) continue;
        const Spectrum sp = rfft(pred.column(c));
        const Spectrum st = rfft(x0.column(c));
        const std::size_t k_count = sp.coefficients.size();
        const std::size_t n = sp.padded_length;
        double channel_loss = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) {
            const std::complex<double> d = sp.coefficients[k] - st.coefficients[k];
            channel_loss += std::norm(d);
            const double scale = 2.0 / static_cast<double>(k_count);
            for (std::size_t j = 0; j < rows; ++j) {
                const double angle = 2.0 * M_PI * static_cast<double>(j * k) /
                                     static_cast<double>(n);
                grad_freq[j * cols + c] +=
                    scale * (d.real() * std::cos(angle) - d.imag() * std::sin(angle));
            }
        }
        out.freq_term += channel_loss / static_cast<double>(k_count);
    }
    if (active_channels > 0) {
        out.freq_term /= static_cast<double>(active_channels);
        const double s = cfg.lambda_freq / static_cast<double>(active_channels);
        for (std::size_t i = 0; i < dim; ++i) grad_pred[i] += s * grad_freq[i];
    }

    const double w = sched.loss_weight(t, cfg.lambda_weight);
    out.total = w * (cfg.lambda_time * out.time_term + cfg.lambda_freq * out.freq_term);
    if (grad) {
        for (std::size_t i = 0; i < dim; ++i) grad_pred[i] *= w;
        net.accumulate_gradients(x_t, t, grad_pred, *grad);
    }
    return out;
}

// One optimizer step per "epoch": a seeded minibatch drawn with replacement,
// each example noised at its own uniformly drawn step. Adam state is local to
// the call, so repeated training resumes from warm weights but a cold
// optimizer. Returns the per-step batch losses.
inline std::vector<double> train(DiffusionModel& model, const std::vector<Window>& windows,
                                 const std::vector<Mask>& loss_masks, const TrainConfig& cfg,
                                 Rng& rng) {
    require(!windows.empty(), "train: no windows");
    require(windows.size() == loss_masks.size(), "train: windows/masks length mismatch");
    require(cfg.batch_size >= 1, "train: batch_size must be >= 1");
    for (std::size_t i = 0; i < windows.size(); ++i) {
        require(windows[i].rows() == model.window_len() &&
                    windows[i].cols() == model.channels(),
                "train: window shape mismatch");
        require(loss_masks[i].same_shape(windows[i]), "train: mask shape mismatch");
    }

    Adam opt(model.net.param_count(), cfg.lr);
    std::vector<double> grad(model.net.param_count());
    std::vector<double> losses;
    losses.reserve(cfg.epochs);
    for (std::size_t step = 0; step < cfg.epochs; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double batch_loss = 0.0;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const std::size_t i = rng.below(windows.size());
            const std::size_t t = 1 + rng.below(model.schedule.n_steps);
            const std::vector<double> x_t =
                forward_diffuse(windows[i].data(), t, model.schedule, rng);
            batch_loss += diffusion_objective(model.net, model.schedule, cfg.loss, windows[i],
                                              loss_masks[i], t, x_t, &grad)
                              .total;
        }
        const double inv = 1.0 / static_cast<double>(cfg.batch_size);
        for (double& g : grad) g *= inv;
        opt.step(model.net.params(), grad);
        losses.push_back(batch_loss * inv);
    }
    return losses;
}

constexpr double kClipLo = -1.5;
constexpr double kClipHi = 2.5;

// Ancestral reverse pass shared by generation and imputation. Each step
// predicts the clean window, clips it, nudges it toward observed values with
// strength eta, then draws the posterior sample (no noise on the last step).
// Observed entries are copied in verbatim at the end. With a zero mask and
// eta = 0 this consumes the same random stream as pure generation, so the two
// paths agree draw for draw.
inline Window sample_core(const DiffusionModel& model, const Window& observed,
                          const Mask& mask, double eta, Rng& rng) {
    const std::size_t rows = model.window_len();
    const std::size_t cols = model.channels();
    const std::size_t dim = rows * cols;
    require(observed.rows() == rows && observed.cols() == cols,
            "sample_core: observation shape mismatch");
    require(mask.same_shape(observed), "sample_core: mask shape mismatch");

    const std::vector<double>& obs = observed.data();
    std::vector<std::uint8_t> m(dim);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m[r * cols + c] = mask(r, c);

    std::vector<double> x(dim);
    for (double& v : x) v = rng.normal();

    const NoiseSchedule& s = model.schedule;
    for (std::size_t t = s.n_steps; t > 0; --t) {
        std::vector<double> x0 = model.net.predict(x, t);
        for (std::size_t i = 0; i < dim; ++i) {
            x0[i] = std::clamp(x0[i], kClipLo, kClipHi);
            if (m[i]) x0[i] -= 2.0 * eta * (x0[i] - obs[i]);
        }
        const double c0 = s.c0(t);
        const double ct = s.ct(t);
        if (t > 1) {
            const double sd = std::sqrt(s.posterior_variance(t));
            for (std::size_t i = 0; i < dim; ++i)
                x[i] = c0 * x0[i] + ct * x[i] + sd * rng.normal();
        } else {
            for (std::size_t i = 0; i < dim; ++i) x[i] = c0 * x0[i] + ct * x[i];
        }
    }
    for (std::size_t i = 0; i < dim; ++i)
        if (m[i]) x[i] = obs[i];
    return unflatten(x, rows, cols);
}

inline Window sample_unconditional(const DiffusionModel& model, Rng& rng) {
    const Window zero(model.window_len(), model.channels(), 0.0);
    return sample_core(model, zero, Mask::zeros(zero.rows(), zero.cols()), 0.0, rng);
}

inline std::vector<Window> sample_unconditional(const DiffusionModel& model, std::size_t n,
                                                Rng& rng) {
    std::vector<Window> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_unconditional(model, rng));
    return out;
}

// Fills unobserved entries by guided generation. An all-zero mask degenerates
// to unconditional sampling; otherwise every channel must anchor the guidance
// with at least one observed entry.
inline Window impute_conditional(const DiffusionModel& model, const Window& observed,
                                 const Mask& mask, double eta, Rng& rng) {
    require(mask.same_shape(observed), "impute_conditional: mask shape mismatch");
    if (!mask.all_zeros()) {
        for (std::size_t c = 0; c < mask.cols(); ++c)
            if (mask.observed_in_column(c) == 0)
                throw Error("impute_conditional: channel " + std::to_string(c) +
                            " has no observed entries");
    }
    return sample_core(model, masked_fill_zero(observed, mask), mask, eta, rng);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

inline std::uint64_t get_u64(std::istream& in) {
    char buf[8];
    in.read(buf, 8);
    require(in.good(), "checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
}

constexpr char kMagic[8] = {'F', 'T', 'D', 'D', 'M', '0', '1', '\n'};

}  // namespace detail

// Binary, little-endian, doubles stored as raw bit patterns so a save/load
// round trip is exact.
inline void save_checkpoint(const std::string& path, const DiffusionModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open checkpoint for writing: " + path);
    out.write(detail::kMagic, 8);
    detail::put_u64(out, model.schedule_kind == ScheduleKind::Linear ? 0 : 1);
    detail::put_u64(out, model.schedule.n_steps);
    detail::put_u64(out, model.net.window_len());
    detail::put_u64(out, model.net.channels());
    detail::put_u64(out, model.net.hidden());
    detail::put_u64(out, model.net.param_count());
    for (double p : model.net.params()) detail::put_u64(out, std::bit_cast<std::uint64_t>(p));
    if (!out.good()) throw Error("checkpoint write failed: " + path);
}

inline DiffusionModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in.good() || !std::equal(magic, magic + 8, detail::kMagic))
        throw Error("not a model checkpoint: " + path);
    const std::uint64_t kind_code = detail::get_u64(in);
    require(kind_code <= 1, "checkpoint: bad schedule kind");
    const std::uint64_t n_steps = detail::get_u64(in);
    const std::uint64_t window_len = detail::get_u64(in);
    const std::uint64_t channels = detail::get_u64(in);
    const std::uint64_t hidden = detail::get_u64(in);
    const std::uint64_t n_params = detail::get_u64(in);

    DiffusionModel model = make_diffusion_model(
        window_len, channels, hidden, n_steps,
        kind_code == 0 ? ScheduleKind::Linear : ScheduleKind::Cosine, 0);
    require(model.net.param_count() == n_params, "checkpoint: parameter count mismatch");
    for (double& p : model.net.params()) p = std::bit_cast<double>(detail::get_u64(in));
    in.peek();
    require(in.eof(), "checkpoint: trailing bytes");
    return model;
}

}  // namespace fedtdd
