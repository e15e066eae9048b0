#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "revforge/langmodel.hpp"

namespace revforge {

struct MlstmConfig {
    std::size_t hidden_size = 32;
    /// Input embedding width; 0 means "same as hidden_size".
    std::size_t embed_size = 0;
    std::size_t epochs = 10;
    double learning_rate = 5e-3;
    /// Truncated-BPTT segment length.
    std::size_t batch_len = 32;
    /// Contiguous slices of the stream trained side by side.
    std::size_t lanes = 8;
    double grad_clip = 5.0;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// Parameters of a single-layer multiplicative LSTM:
///
///   m_t = (W_mx x_t) * (W_mh h_{t-1})
///   [i f o u] = W_gx x_t + W_gm m_t + b_g
///   c_t = sigmoid(f) * c_{t-1} + sigmoid(i) * tanh(u)
///   h_t = sigmoid(o) * tanh(c_t)
///   P(. | x_<=t) = softmax(W_out h_t + b_out)
///
/// x_t is column x of `embedding`. Gate rows are stacked i, f, o, u.
struct MlstmParameters {
    Eigen::MatrixXd embedding;  // D x V
    Eigen::MatrixXd w_mx;       // H x D
    Eigen::MatrixXd w_mh;       // H x H
    Eigen::MatrixXd w_gx;       // 4H x D
    Eigen::MatrixXd w_gm;       // 4H x H
    Eigen::VectorXd b_g;        // 4H
    Eigen::MatrixXd w_out;      // V x H
    Eigen::VectorXd b_out;      // V

    /// Same shapes, all zeros.
    MlstmParameters zeros_like() const;

    /// (name, tensor) for every parameter group, in a fixed order.
    std::vector<std::pair<std::string, Eigen::Map<Eigen::VectorXd>>> groups();
    bool all_finite() const;
};

struct MlstmTrainReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> epoch_loss;
    std::size_t steps = 0;
};

/// Thrown when a training step produces a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t step, const std::string& what);
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

struct SentimentNeuron {
    std::size_t index = 0;
    /// +1 when the unit rises with positive sentiment, -1 otherwise.
    int polarity = 1;
    double correlation = 0.0;
    bool low_confidence = false;
};

inline constexpr double kNeuronConfidenceFloor = 0.2;

class MlstmModel final : public LanguageModel {
public:
    /// Untrained.
    MlstmModel() = default;

    /// Randomly initialised model, not yet marked trained.
    static MlstmModel initialize(Vocabulary vocab, std::size_t hidden_size, std::size_t embed_size,
                                 std::uint64_t rng_seed);

    /// Adam on the mean next-token cross-entropy of the stream.
    static MlstmModel train(Vocabulary vocab, std::span<const TokenId> stream, const MlstmConfig& config,
                            MlstmTrainReport* report = nullptr);

    /// Wraps explicit parameters (deserialisation and tests).
    static MlstmModel from_parameters(Vocabulary vocab, MlstmParameters params, bool trained,
                                      std::optional<SentimentNeuron> neuron = std::nullopt);

    ModelKind kind() const override { return ModelKind::Mlstm; }
    const Vocabulary& vocabulary() const override { return vocab_; }
    bool trained() const override { return trained_; }
    std::unique_ptr<ModelState> initial_state() const override { return initial_state(std::nullopt); }
    std::unique_ptr<ModelState> initial_state(const std::optional<ClampSpec>& clamp) const;
    void advance(ModelState& state, TokenId token) const override;
    NextTokenDistribution distribution(const ModelState& state) const override;

    std::size_t hidden_size() const { return static_cast<std::size_t>(params_.w_mh.rows()); }
    std::size_t embed_size() const { return static_cast<std::size_t>(params_.embedding.rows()); }
    const MlstmParameters& parameters() const { return params_; }
    MlstmParameters& mutable_parameters() { return params_; }

    const std::optional<SentimentNeuron>& sentiment_neuron() const { return neuron_; }
    void set_sentiment_neuron(const SentimentNeuron& neuron);

    /// Hidden vector h of a state produced by this model.
    static const Eigen::VectorXd& hidden(const ModelState& state);

    /// h after consuming `seq` from the empty context.
    Eigen::VectorXd final_hidden(std::span<const TokenId> seq) const;

    /// Mean negative log-likelihood of stream[1..] given stream[0..t-1],
    /// evaluated token by token through the inference path.
    double mean_loss(std::span<const TokenId> stream) const;

    /// Loss and analytic gradient over the whole stream as one BPTT segment
    /// in a single lane, starting from a zero state.
    std::pair<double, MlstmParameters> loss_and_gradient(std::span<const TokenId> stream) const;

private:
    Vocabulary vocab_;
    MlstmParameters params_;
    bool trained_ = false;
    std::optional<SentimentNeuron> neuron_;
};

/// Picks the unit whose activation has the largest absolute point-biserial
/// correlation with the label (positive = 1). Rows of `activations` are
/// examples, columns are units.
SentimentNeuron select_sentiment_unit(const Eigen::MatrixXd& activations, std::span<const Sentiment> labels);

/// Runs each sequence through the model and applies select_sentiment_unit to
/// the final hidden vectors. Throws std::invalid_argument on single-class input.
SentimentNeuron find_sentiment_neuron(const MlstmModel& model,
                                      std::span<const std::pair<TokenSequence, Sentiment>> labeled);

/// Clamp that steers generation towards `target`, honouring the unit's polarity.
ClampSpec clamp_for(const SentimentNeuron& neuron, Sentiment target);

}  // namespace revforge
