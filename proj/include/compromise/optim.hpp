#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace compromise {

struct AdamHyper {
    double beta1 = 0.90;
    double beta2 = 0.99;
    double eps = 1e-8;
};

/// Adam moments for one flat parameter block.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad, double lr,
              const AdamHyper& h) {
        ++t_;
        const double c1 = 1.0 - std::pow(h.beta1, t_);
        const double c2 = 1.0 - std::pow(h.beta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = h.beta1 * m_[i] + (1.0 - h.beta1) * grad[i];
            v_[i] = h.beta2 * v_[i] + (1.0 - h.beta2) * grad[i] * grad[i];
            const double mhat = m_[i] / c1;
            const double vhat = v_[i] / c2;
            params[i] -= lr * mhat / (std::sqrt(vhat) + h.eps);
        }
    }

private:
    std::vector<double> m_, v_;
    int t_ = 0;
};

}  // namespace compromise
