#pragma once

#include <span>

#include <Eigen/Dense>

namespace revforge {

struct LogisticConfig {
    /// Ridge penalty (l2/2)||w||^2 added to the mean log-loss; bias is not penalised.
    double l2 = 1e-3;
    std::size_t max_iter = 100;
    double tol = 1e-12;
    /// Fit on z-scored features (statistics from the training set).
    bool standardize = true;

    void validate() const;
};

struct LogisticFitReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::size_t iterations = 0;
};

double sigmoid(double z);

/// Binary logistic regression fitted by damped Newton iterations.
class LogisticRegression {
public:
    /// Untrained.
    LogisticRegression() = default;

    /// Rows of `x` are samples; labels are 1 for the positive class.
    /// Throws std::invalid_argument on empty input, mismatched sizes or a
    /// single class.
    static LogisticRegression fit(const Eigen::MatrixXd& x, std::span<const int> labels, const LogisticConfig& config,
                                  LogisticFitReport* report = nullptr);

    /// Weights act on raw features.
    static LogisticRegression from_weights(Eigen::VectorXd weights, double bias);

    bool trained() const { return trained_; }
    std::size_t dimension() const { return static_cast<std::size_t>(weights_.size()); }

    double decision(const Eigen::VectorXd& x) const;
    double score(const Eigen::VectorXd& x) const { return sigmoid(decision(x)); }

    /// Weights and bias expressed on the raw (unstandardised) feature scale.
    Eigen::VectorXd raw_weights() const;
    double raw_bias() const;

    /// Penalised objective on raw features, for diagnostics and tests.
    double objective(const Eigen::MatrixXd& x, std::span<const int> labels, double l2) const;

private:
    Eigen::VectorXd weights_;
    double bias_ = 0.0;
    Eigen::VectorXd mean_;
    Eigen::VectorXd scale_;
    bool trained_ = false;
};

}  // namespace revforge
