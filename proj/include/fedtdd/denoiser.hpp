#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedtdd/error.hpp"
#include "fedtdd/rng.hpp"

namespace fedtdd {

constexpr std::size_t kStepEmbedDim = 32;

// Transformer-style sinusoidal embedding of the diffusion step index.
inline void write_step_embedding(std::size_t t, double* out) {
    constexpr std::size_t half = kStepEmbedDim / 2;
    for (std::size_t j = 0; j < half; ++j) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half - 1));
        const double angle = static_cast<double>(t) * freq;
        out[2 * j] = std::sin(angle);
        out[2 * j + 1] = std::cos(angle);
    }
}

// Two-hidden-layer tanh MLP predicting the clean window from a noisy one.
// Input is the flattened window plus the step embedding; the output layer
// starts at zero so an untrained model is the identity on its input, which
// keeps early reverse steps stable.
class Denoiser {
public:
    Denoiser() = default;

    Denoiser(std::size_t window_len, std::size_t channels, std::size_t hidden,
             std::uint64_t seed)
        : window_len_(window_len), channels_(channels), hidden_(hidden) {
        require(window_len >= 1 && channels >= 1 && hidden >= 1,
                "Denoiser: dimensions must be positive");
        params_.assign(param_count(), 0.0);
        Rng rng(seed);
        const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim()));
        const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
        double* p = params_.data();
        for (std::size_t i = 0; i < hidden_ * input_dim(); ++i) p[off_w1() + i] = s1 * rng.normal();
        for (std::size_t i = 0; i < hidden_ * hidden_; ++i) p[off_w2() + i] = s2 * rng.normal();
        // b1, b2, W3, b3 stay zero.
    }

    std::size_t window_len() const { return window_len_; }
    std::size_t channels() const { return channels_; }
    std::size_t hidden() const { return hidden_; }
    std::size_t data_dim() const { return window_len_ * channels_; }
    std::size_t input_dim() const { return data_dim() + kStepEmbedDim; }

    std::size_t param_count() const {
        return hidden_ * input_dim() + hidden_      // W1, b1
               + hidden_ * hidden_ + hidden_        // W2, b2
               + data_dim() * hidden_ + data_dim(); // W3, b3
    }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    // x0_hat = x + W3 tanh(W2 tanh(W1 [x; emb(t)] + b1) + b2) + b3
    std::vector<double> predict(const std::vector<double>& x, std::size_t t) const {
        require(x.size() == data_dim(), "Denoiser::predict: input size mismatch");
        std::vector<double> in(input_dim());
        std::vector<double> h1(hidden_), h2(hidden_);
        std::vector<double> out(data_dim());
        forward(x, t, in, h1, h2, out);
        return out;
    }

    // Adds dL/dparams for one example to grad (same layout as params()).
    // grad_out is dL/dx0_hat; the gradient through the identity skip to the
    // input is dropped because the input is data, not a parameter.
    void accumulate_gradients(const std::vector<double>& x, std::size_t t,
                              const std::vector<double>& grad_out,
                              std::vector<double>& grad) const {
        require(grad_out.size() == data_dim(), "Denoiser: upstream gradient size mismatch");
        require(grad.size() == param_count(), "Denoiser: gradient buffer size mismatch");
        std::vector<double> in(input_dim());
        std::vector<double> h1(hidden_), h2(hidden_);
        std::vector<double> out(data_dim());
        forward(x, t, in, h1, h2, out);

        const double* w2 = params_.data() + off_w2();
        const double* w3 = params_.data() + off_w3();
        double* g_w1 = grad.data() + off_w1();
        double* g_b1 = grad.data() + off_b1();
        double* g_w2 = grad.data() + off_w2();
        double* g_b2 = grad.data() + off_b2();
        double* g_w3 = grad.data() + off_w3();
        double* g_b3 = grad.data() + off_b3();

        std::vector<double> dz2(hidden_, 0.0);
        for (std::size_t i = 0; i < data_dim(); ++i) {
            const double g = grad_out[i];
            g_b3[i] += g;
            const double* row = w3 + i * hidden_;
            double* g_row = g_w3 + i * hidden_;
            for (std::size_t j = 0; j < hidden_; ++j) {
                g_row[j] += g * h2[j];
                dz2[j] += g * row[j];
            }
        }
        for (std::size_t j = 0; j < hidden_; ++j) dz2[j] *= 1.0 - h2[j] * h2[j];

        std::vector<double> dz1(hidden_, 0.0);
        for (std::size_t i = 0; i < hidden_; ++i) {
            const double g = dz2[i];
            g_b2[i] += g;
            const double* row = w2 + i * hidden_;
            double* g_row = g_w2 + i * hidden_;
            for (std::size_t j = 0; j < hidden_; ++j) {
                g_row[j] += g * h1[j];
                dz1[j] += g * row[j];
            }
        }
        for (std::size_t j = 0; j < hidden_; ++j) dz1[j] *= 1.0 - h1[j] * h1[j];

        for (std::size_t i = 0; i < hidden_; ++i) {
            const double g = dz1[i];
            g_b1[i] += g;
            double* g_row = g_w1 + i * input_dim();
            for (std::size_t j = 0; j < input_dim(); ++j) g_row[j] += g * in[j];
        }
    }

private:
    std::size_t off_w1() const { return 0; }
    std::size_t off_b1() const { return hidden_ * input_dim(); }
    std::size_t off_w2() const { return off_b1() + hidden_; }
    std::size_t off_b2() const { return off_w2() + hidden_ * hidden_; }
    std::size_t off_w3() const { return off_b2() + hidden_; }
    std::size_t off_b3() const { return off_w3() + data_dim() * hidden_; }

    void forward(const std::vector<double>& x, std::size_t t, std::vector<double>& in,
                 std::vector<double>& h1, std::vector<double>& h2,
                 std::vector<double>& out) const {
        std::copy(x.begin(), x.end(), in.begin());
        write_step_embedding(t, in.data() + data_dim());

        const double* w1 = params_.data() + off_w1();
        const double* b1 = params_.data() + off_b1();
        const double* w2 = params_.data() + off_w2();
        const double* b2 = params_.data() + off_b2();
        const double* w3 = params_.data() + off_w3();
        const double* b3 = params_.data() + off_b3();

        for (std::size_t i = 0; i < hidden_; ++i) {
            double z = b1[i];
            const double* row = w1 + i * input_dim();
            for (std::size_t j = 0; j < input_dim(); ++j) z += row[j] * in[j];
            h1[i] = std::tanh(z);
        }
        for (std::size_t i = 0; i < hidden_; ++i) {
            double z = b2[i];
            const double* row = w2 + i * hidden_;
            for (std::size_t j = 0; j < hidden_; ++j) z += row[j] * h1[j];
            h2[i] = std::tanh(z);
        }
        for (std::size_t i = 0; i < data_dim(); ++i) {
            double z = b3[i] + x[i];
            const double* row = w3 + i * hidden_;
            for (std::size_t j = 0; j < hidden_; ++j) z += row[j] * h2[j];
            out[i] = z;
        }
    }

    std::size_t window_len_ = 0;
    std::size_t channels_ = 0;
    std::size_t hidden_ = 0;
    std::vector<double> params_;
};

class Adam {
public:
    Adam() = default;
    explicit Adam(std::size_t n, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad) {
        require(params.size() == m_.size() && grad.size() == m_.size(),
                "Adam: size mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
            params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
        }
    }

private:
    double lr_ = 1e-3;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::uint64_t t_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

}  // namespace fedtdd
