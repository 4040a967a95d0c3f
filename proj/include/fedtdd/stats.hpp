#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fedtdd/error.hpp"
#include "fedtdd/matrix.hpp"

namespace fedtdd {

struct GaussianMoments {
    std::vector<double> mean;
    Matrix covariance;  // symmetric, eigenvalues clipped to >= 0 downstream

    std::size_t dim() const { return mean.size(); }
};

// Sample mean and unbiased covariance.
inline GaussianMoments gaussian_moments(const std::vector<std::vector<double>>& samples) {
    require(samples.size() >= 2, "gaussian_moments: need at least 2 samples");
    const std::size_t d = samples.front().size();
    for (const auto& s : samples)
        require(s.size() == d, "gaussian_moments: inconsistent sample dimension");

    GaussianMoments out;
    out.mean.assign(d, 0.0);
    for (const auto& s : samples)
        for (std::size_t i = 0; i < d; ++i) out.mean[i] += s[i];
    for (std::size_t i = 0; i < d; ++i) out.mean[i] /= static_cast<double>(samples.size());

    out.covariance = Matrix(d, d, 0.0);
    for (const auto& s : samples)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j)
                out.covariance(i, j) += (s[i] - out.mean[i]) * (s[j] - out.mean[j]);
    const double denom = static_cast<double>(samples.size() - 1);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            out.covariance(i, j) /= denom;
            out.covariance(j, i) = out.covariance(i, j);
        }
    return out;
}

// Cyclic Jacobi eigendecomposition for symmetric matrices. Fine for the
// small covariance blocks this project handles (d <= ~50).
inline void jacobi_eigh(const Matrix& sym, std::vector<double>& eigenvalues,
                        Matrix& eigenvectors) {
    const std::size_t n = sym.rows();
    require(sym.cols() == n, "jacobi_eigh: matrix must be square");
    Matrix a = sym;
    eigenvectors = Matrix(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) eigenvectors(i, i) = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = eigenvectors(k, p), vkq = eigenvectors(k, q);
                    eigenvectors(k, p) = c * vkp - s * vkq;
                    eigenvectors(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    eigenvalues.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a(i, i);
}

inline double max_asymmetry(const Matrix& m) {
    double worst = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j)
            worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
    return worst;
}

// Symmetric PSD square root via eigendecomposition; negative eigenvalues
// (numerical noise) are clipped to zero.
inline Matrix spd_sqrt(const Matrix& m) {
    require(m.rows() == m.cols(), "spd_sqrt: matrix must be square");
    require(max_asymmetry(m) <= 1e-8, "spd_sqrt: matrix not symmetric within 1e-8");
    std::vector<double> evals;
    Matrix evecs;
    jacobi_eigh(m, evals, evecs);
    const std::size_t n = m.rows();
    Matrix scaled(n, n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double root = std::sqrt(std::max(0.0, evals[j]));
        for (std::size_t i = 0; i < n; ++i) scaled(i, j) = evecs(i, j) * root;
    }
    return matmul(scaled, transpose(evecs));
}

// Solves A x = b for symmetric positive definite A by Cholesky
// factorization. Callers add a ridge term when A might be only
// semi-definite.
inline std::vector<double> solve_spd(const Matrix& a, const std::vector<double>& b) {
    const std::size_t n = a.rows();
    require(a.cols() == n && b.size() == n, "solve_spd: shape mismatch");
    Matrix l(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                require(s > 0.0, "solve_spd: matrix not positive definite");
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    std::vector<double> x(n);
    for (std::size_t ii = n; ii > 0; --ii) {
        const std::size_t i = ii - 1;
        double s = y[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
        x[i] = s / l(i, i);
    }
    return x;
}

inline double trace(const Matrix& m) {
    double t = 0.0;
    for (std::size_t i = 0; i < std::min(m.rows(), m.cols()); ++i) t += m(i, i);
    return t;
}

// Frechet distance between two Gaussians, with the symmetrized inner term
// sqrt(Sa) Sb sqrt(Sa); clipped at zero.
inline double frechet_distance(const GaussianMoments& a, const GaussianMoments& b) {
    require(a.dim() == b.dim(), "frechet_distance: dimension mismatch");
    double mean_term = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double d = a.mean[i] - b.mean[i];
        mean_term += d * d;
    }
    const Matrix root_a = spd_sqrt(a.covariance);
    Matrix inner = matmul(matmul(root_a, b.covariance), root_a);
    // symmetrize away round-off before the second root
    for (std::size_t i = 0; i < inner.rows(); ++i)
        for (std::size_t j = i + 1; j < inner.cols(); ++j) {
            const double s = 0.5 * (inner(i, j) + inner(j, i));
            inner(i, j) = s;
            inner(j, i) = s;
        }
    const Matrix cross = spd_sqrt(inner);
    const double value =
        mean_term + trace(a.covariance) + trace(b.covariance) - 2.0 * trace(cross);
    return std::max(0.0, value);
}

}  // namespace fedtdd
