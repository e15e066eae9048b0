#include "revforge/logistic.hpp"

#include <cmath>
#include <stdexcept>

namespace revforge {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void LogisticConfig::validate() const {
    if (!(l2 >= 0.0)) throw std::invalid_argument("logistic l2 must be non-negative");
    if (max_iter == 0) throw std::invalid_argument("logistic max_iter must be positive");
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double penalised_loss(const MatrixXd& z, const VectorXd& y, const VectorXd& w, double b, double l2) {
    const VectorXd margin = (z * w).array() + b;
    double s = 0.0;
    for (Eigen::Index i = 0; i < margin.size(); ++i) s += softplus(margin[i]) - y[i] * margin[i];
    return s / static_cast<double>(margin.size()) + 0.5 * l2 * w.squaredNorm();
}

}  // namespace

LogisticRegression LogisticRegression::fit(const MatrixXd& x, std::span<const int> labels, const LogisticConfig& config,
                                           LogisticFitReport* report) {
    config.validate();
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (n == 0 || d == 0) throw std::invalid_argument("logistic regression needs samples and features");
    if (static_cast<std::size_t>(n) != labels.size())
        throw std::invalid_argument("logistic regression: label count does not match sample count");
    if (!x.allFinite()) throw std::invalid_argument("logistic regression: non-finite feature");
    VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    if (y.sum() == 0.0 || y.sum() == static_cast<double>(n))
        throw std::invalid_argument("logistic regression needs both classes");

    LogisticRegression m;
    m.mean_ = VectorXd::Zero(d);
    m.scale_ = VectorXd::Ones(d);
    if (config.standardize) {
        m.mean_ = x.colwise().mean().transpose();
        for (Eigen::Index j = 0; j < d; ++j) {
            const double var = (x.col(j).array() - m.mean_[j]).square().mean();
            m.scale_[j] = var > 0.0 ? std::sqrt(var) : 1.0;
        }
    }
    MatrixXd z = (x.rowwise() - m.mean_.transpose()).array().rowwise() / m.scale_.transpose().array();

    VectorXd w = VectorXd::Zero(d);
    double b = 0.0;
    LogisticFitReport local;
    local.initial_loss = penalised_loss(z, y, w, b, config.l2);
    double loss = local.initial_loss;
    const double inv_n = 1.0 / static_cast<double>(n);

    for (std::size_t it = 0; it < config.max_iter; ++it) {
        VectorXd p(n), s(n);
        const VectorXd margin = (z * w).array() + b;
        for (Eigen::Index i = 0; i < n; ++i) {
            p[i] = sigmoid(margin[i]);
            s[i] = p[i] * (1.0 - p[i]);
        }
        const VectorXd r = p - y;

        VectorXd grad(d + 1);
        grad.head(d) = inv_n * (z.transpose() * r) + config.l2 * w;
        grad[d] = inv_n * r.sum();

        MatrixXd hess(d + 1, d + 1);
        hess.topLeftCorner(d, d) = inv_n * (z.transpose() * s.asDiagonal() * z);
        hess.topLeftCorner(d, d).diagonal().array() += config.l2;
        hess.topRightCorner(d, 1) = inv_n * (z.transpose() * s);
        hess.bottomLeftCorner(1, d) = hess.topRightCorner(d, 1).transpose();
        hess(d, d) = inv_n * s.sum() + 1e-12;
        const VectorXd step = hess.ldlt().solve(grad);

        // Backtracking keeps every accepted iterate a descent step.
        double t = 1.0;
        VectorXd w_new;
        double b_new = 0.0, loss_new = loss;
        for (int k = 0; k < 50; ++k) {
            w_new = w - t * step.head(d);
            b_new = b - t * step[d];
            loss_new = penalised_loss(z, y, w_new, b_new, config.l2);
            if (loss_new <= loss) break;
            t *= 0.5;
        }
        local.iterations = it + 1;
        if (!(loss_new <= loss)) break;
        const double moved = t * step.cwiseAbs().maxCoeff();
        w = w_new;
        b = b_new;
        loss = loss_new;
        if (moved < config.tol || grad.cwiseAbs().maxCoeff() < config.tol) break;
    }
    if (!w.allFinite() || !std::isfinite(b)) throw std::runtime_error("logistic regression diverged");

    m.weights_ = w;
    m.bias_ = b;
    m.trained_ = true;
    local.final_loss = loss;
    if (report) *report = local;
    return m;
}

LogisticRegression LogisticRegression::from_weights(VectorXd weights, double bias) {
    if (weights.size() == 0) throw std::invalid_argument("logistic regression needs at least one weight");
    if (!weights.allFinite() || !std::isfinite(bias)) throw std::invalid_argument("weights must be finite");
    LogisticRegression m;
    m.mean_ = VectorXd::Zero(weights.size());
    m.scale_ = VectorXd::Ones(weights.size());
    m.weights_ = std::move(weights);
    m.bias_ = bias;
    m.trained_ = true;
    return m;
}

double LogisticRegression::decision(const VectorXd& x) const {
    if (!trained_) throw std::logic_error("logistic regression is not trained");
    if (x.size() != weights_.size()) throw std::invalid_argument("feature dimension mismatch");
    return ((x - mean_).array() / scale_.array()).matrix().dot(weights_) + bias_;
}

VectorXd LogisticRegression::raw_weights() const { return (weights_.array() / scale_.array()).matrix(); }

double LogisticRegression::raw_bias() const { return bias_ - raw_weights().dot(mean_); }

double LogisticRegression::objective(const MatrixXd& x, std::span<const int> labels, double l2) const {
    VectorXd y(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) y[i] = labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    return penalised_loss(x, y, raw_weights(), raw_bias(), 0.0) + 0.5 * l2 * weights_.squaredNorm();
}

}  // namespace revforge
