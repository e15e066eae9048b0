#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "revforge/corpus.hpp"
#include "revforge/langmodel.hpp"
#include "revforge/logistic.hpp"

namespace revforge {

// ---------------------------------------------------------------------------
// Equal error rate

struct ScoredSample {
    double score = 0.0;  // higher = more likely fake
    bool is_fake = false;
};

struct EerResult {
    double eer = 0.0;
    double threshold = 0.0;
    std::size_t n_fake = 0;
    std::size_t n_real = 0;
};

/// FAR(t) = share of reals scoring >= t, FRR(t) = share of fakes scoring < t.
/// The ROC points at every distinct score (plus +inf) are joined linearly and
/// the EER is read where FAR - FRR crosses zero. Throws std::invalid_argument
/// unless both classes are present.
EerResult compute_eer(std::span<const ScoredSample> samples);

// ---------------------------------------------------------------------------
// Features

struct RankBinConfig {
    std::array<std::size_t, 3> bounds{10, 100, 1000};
    /// Use |V| * {1%, 10%, 50%} (at least 1, 2, 3) instead of `bounds`.
    bool proportional = false;
    /// Divide counts by the number of scored tokens.
    bool normalized = false;
};

std::array<std::size_t, 3> effective_bounds(const RankBinConfig& config, std::size_t vocab_size);

struct RankBinFeature {
    /// rank <= b1, (b1, b2], (b2, b3], > b3
    std::array<std::uint64_t, 4> counts{};
    std::array<std::size_t, 3> bounds{};

    std::uint64_t total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
};

/// Ranks every token of the text under the model given <bor> and the
/// preceding tokens. <bor> is context only; no <eor> is scored.
/// Throws std::invalid_argument when the text has no tokens.
RankBinFeature rank_bin_features(const LanguageModel& lm, std::string_view text, const RankBinConfig& config = {});

struct PerplexityFeature {
    double mean_nll = 0.0;
    std::size_t tokens = 0;
};

/// Zero-probability tokens contribute -ln(1e-300) so the feature stays finite.
PerplexityFeature perplexity_features(const LanguageModel& lm, std::string_view text);

// ---------------------------------------------------------------------------
// Detectors

enum class DetectorKind { RankBin, Perplexity };

std::string_view to_string(DetectorKind kind);

struct DetectorScore {
    std::string review_id;
    std::string detector;
    double score = 0.0;
};

/// A scoring language model, a feature map and a logistic regression on top.
class Detector {
public:
    Detector(DetectorKind kind, std::shared_ptr<const LanguageModel> lm, RankBinConfig bins = {});

    DetectorKind kind() const { return kind_; }
    std::string name() const { return std::string(to_string(kind_)); }
    bool trained() const { return regression_.trained(); }
    const LogisticRegression& regression() const { return regression_; }
    void set_regression(LogisticRegression regression);

    Eigen::VectorXd features(std::string_view text) const;

    /// sigmoid of the regression output. Throws std::logic_error when untrained.
    DetectorScore score(const Review& review) const;

private:
    DetectorKind kind_;
    std::shared_ptr<const LanguageModel> lm_;
    RankBinConfig bins_;
    LogisticRegression regression_;
};

/// Fits the detector's regression on reviews labelled by provenance (Fake = 1).
/// The class ratio is used as given.
Detector train_detector(DetectorKind kind, std::shared_ptr<const LanguageModel> lm, std::span<const Review> labeled,
                        const LogisticConfig& config = {}, const RankBinConfig& bins = {},
                        LogisticFitReport* report = nullptr);

struct FusionModel {
    std::vector<std::string> members;
    LogisticRegression regression;
    /// Members whose learned weight came out negative.
    std::vector<std::string> anti_predictive;

    std::string name() const;
    double score(std::span<const double> member_scores) const;
};

/// Score-level fusion: logistic regression on raw member scores (no
/// standardisation). `member_scores[i]` holds every member's score for sample i.
FusionModel train_fusion(std::vector<std::string> members, std::span<const std::vector<double>> member_scores,
                         std::span<const int> labels, const LogisticConfig& config = {});

// ---------------------------------------------------------------------------
// Reports

struct EvalDataset {
    std::string name;
    std::vector<Review> reviews;  // labelled by provenance
};

struct DetectionRow {
    std::string name;
    std::vector<EerResult> per_dataset;
    /// EER of the scores pooled over every dataset.
    EerResult overall;
};

struct ScoreRecord {
    std::string dataset;
    std::string review_id;
    std::string detector;
    double score = 0.0;
    bool is_fake = false;
};

struct DetectionReport {
    std::vector<std::string> datasets;
    std::vector<DetectionRow> rows;
    std::vector<ScoreRecord> scores;
};

DetectionReport evaluate_detectors(std::span<const Detector> detectors, std::span<const FusionModel> fusions,
                                   std::span<const EvalDataset> datasets);

nlohmann::json to_json(const DetectionReport& report);
DetectionReport detection_from_json(const nlohmann::json& j);

/// Detector rows, one EER column (percent) per dataset plus "Overall".
std::string format_detection_table(const DetectionReport& report);

/// review_id,detector,score,is_fake
void write_scores_csv(const DetectionReport& report, const std::filesystem::path& path);

}  // namespace revforge
