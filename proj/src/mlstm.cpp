#include "revforge/mlstm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "revforge/rng.hpp"

namespace revforge {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void MlstmConfig::validate() const {
    if (hidden_size == 0) throw std::invalid_argument("mLSTM hidden_size must be positive");
    if (epochs == 0) throw std::invalid_argument("mLSTM epochs must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("mLSTM learning_rate must be positive");
    if (batch_len == 0) throw std::invalid_argument("mLSTM batch_len must be positive");
    if (lanes == 0) throw std::invalid_argument("mLSTM lanes must be positive");
    if (!(grad_clip > 0.0)) throw std::invalid_argument("mLSTM grad_clip must be positive");
}

MlstmParameters MlstmParameters::zeros_like() const {
    MlstmParameters z;
    z.embedding = MatrixXd::Zero(embedding.rows(), embedding.cols());
    z.w_mx = MatrixXd::Zero(w_mx.rows(), w_mx.cols());
    z.w_mh = MatrixXd::Zero(w_mh.rows(), w_mh.cols());
    z.w_gx = MatrixXd::Zero(w_gx.rows(), w_gx.cols());
    z.w_gm = MatrixXd::Zero(w_gm.rows(), w_gm.cols());
    z.b_g = VectorXd::Zero(b_g.size());
    z.w_out = MatrixXd::Zero(w_out.rows(), w_out.cols());
    z.b_out = VectorXd::Zero(b_out.size());
    return z;
}

std::vector<std::pair<std::string, Eigen::Map<VectorXd>>> MlstmParameters::groups() {
    std::vector<std::pair<std::string, Eigen::Map<VectorXd>>> g;
    auto add = [&](const char* name, auto& m) { g.emplace_back(name, Eigen::Map<VectorXd>(m.data(), m.size())); };
    add("embedding", embedding);
    add("w_mx", w_mx);
    add("w_mh", w_mh);
    add("w_gx", w_gx);
    add("w_gm", w_gm);
    add("b_g", b_g);
    add("w_out", w_out);
    add("b_out", b_out);
    return g;
}

bool MlstmParameters::all_finite() const {
    return embedding.allFinite() && w_mx.allFinite() && w_mh.allFinite() && w_gx.allFinite() &&
           w_gm.allFinite() && b_g.allFinite() && w_out.allFinite() && b_out.allFinite();
}

DivergenceError::DivergenceError(std::size_t step, const std::string& what)
    : std::runtime_error("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}

namespace {

MatrixXd sigmoid(const MatrixXd& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

struct MlstmState final : ModelState {
    VectorXd h;
    VectorXd c;
    std::optional<ClampSpec> clamp;
    std::unique_ptr<ModelState> clone() const override { return std::make_unique<MlstmState>(*this); }
};

MatrixXd uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
    MatrixXd m(rows, cols);
    // Column-major fill keeps initialisation a pure function of the seed.
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-scale, scale);
    return m;
}

struct Step {
    std::vector<TokenId> inputs;
    std::vector<TokenId> targets;
    MatrixXd x, a, bm, m, i, f, o, u, c_prev, c, tanh_c, h_prev, h, probs;
};

/// Forward pass over a segment, updating the carried (h, c). With `grad`
/// set, backpropagates through the segment and accumulates into it.
/// Returns the summed negative log-likelihood.
double run_segment(const MlstmParameters& p, std::span<const std::vector<TokenId>> inputs,
                   std::span<const std::vector<TokenId>> targets, MatrixXd& h, MatrixXd& c, MlstmParameters* grad,
                   double norm) {
    const Eigen::Index H = p.w_mh.rows();
    const Eigen::Index B = h.cols();
    std::vector<Step> steps(inputs.size());
    double nll = 0.0;

    for (std::size_t t = 0; t < inputs.size(); ++t) {
        Step& s = steps[t];
        s.inputs = inputs[t];
        s.targets = targets[t];
        s.x.resize(p.embedding.rows(), B);
        for (Eigen::Index b = 0; b < B; ++b) s.x.col(b) = p.embedding.col(s.inputs[static_cast<std::size_t>(b)]);
        s.h_prev = h;
        s.c_prev = c;
        s.a = p.w_mx * s.x;
        s.bm = p.w_mh * h;
        s.m = s.a.cwiseProduct(s.bm);
        MatrixXd g = p.w_gx * s.x + p.w_gm * s.m;
        g.colwise() += p.b_g;
        s.i = sigmoid(g.topRows(H));
        s.f = sigmoid(g.middleRows(H, H));
        s.o = sigmoid(g.middleRows(2 * H, H));
        s.u = g.bottomRows(H).array().tanh().matrix();
        s.c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.u);
        s.tanh_c = s.c.array().tanh().matrix();
        s.h = s.o.cwiseProduct(s.tanh_c);
        h = s.h;
        c = s.c;

        MatrixXd z = p.w_out * s.h;
        z.colwise() += p.b_out;
        s.probs.resize(z.rows(), B);
        for (Eigen::Index b = 0; b < B; ++b) {
            const double top = z.col(b).maxCoeff();
            VectorXd e = (z.col(b).array() - top).exp();
            const double zsum = e.sum();
            s.probs.col(b) = e / zsum;
            const auto y = static_cast<Eigen::Index>(s.targets[static_cast<std::size_t>(b)]);
            nll -= z(y, b) - top - std::log(zsum);
        }
    }
    if (!grad) return nll;

    MatrixXd dh_next = MatrixXd::Zero(H, B);
    MatrixXd dc_next = MatrixXd::Zero(H, B);
    MatrixXd dg(4 * H, B);
    for (std::size_t t = steps.size(); t-- > 0;) {
        const Step& s = steps[t];
        MatrixXd dz = s.probs;
        for (Eigen::Index b = 0; b < B; ++b) dz(static_cast<Eigen::Index>(s.targets[static_cast<std::size_t>(b)]), b) -= 1.0;
        dz /= norm;
        grad->w_out.noalias() += dz * s.h.transpose();
        grad->b_out += dz.rowwise().sum();

        MatrixXd dh = p.w_out.transpose() * dz + dh_next;
        MatrixXd d_o = dh.cwiseProduct(s.tanh_c);
        MatrixXd dc = dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix()) + dc_next;
        MatrixXd df = dc.cwiseProduct(s.c_prev);
        MatrixXd di = dc.cwiseProduct(s.u);
        MatrixXd du = dc.cwiseProduct(s.i);
        dc_next = dc.cwiseProduct(s.f);

        dg.topRows(H) = di.cwiseProduct((s.i.array() * (1.0 - s.i.array())).matrix());
        dg.middleRows(H, H) = df.cwiseProduct((s.f.array() * (1.0 - s.f.array())).matrix());
        dg.middleRows(2 * H, H) = d_o.cwiseProduct((s.o.array() * (1.0 - s.o.array())).matrix());
        dg.bottomRows(H) = du.cwiseProduct((1.0 - s.u.array().square()).matrix());

        grad->w_gx.noalias() += dg * s.x.transpose();
        grad->w_gm.noalias() += dg * s.m.transpose();
        grad->b_g += dg.rowwise().sum();

        MatrixXd dm = p.w_gm.transpose() * dg;
        MatrixXd dx = p.w_gx.transpose() * dg;
        MatrixXd da = dm.cwiseProduct(s.bm);
        MatrixXd dbm = dm.cwiseProduct(s.a);
        grad->w_mx.noalias() += da * s.x.transpose();
        dx.noalias() += p.w_mx.transpose() * da;
        grad->w_mh.noalias() += dbm * s.h_prev.transpose();
        dh_next = p.w_mh.transpose() * dbm;

        for (Eigen::Index b = 0; b < B; ++b) grad->embedding.col(s.inputs[static_cast<std::size_t>(b)]) += dx.col(b);
    }
    return nll;
}

void check_stream(const Vocabulary& vocab, std::span<const TokenId> stream) {
    for (TokenId t : stream)
        if (t >= vocab.size()) throw std::invalid_argument("stream holds an id outside the vocabulary");
}

}  // namespace

MlstmModel MlstmModel::initialize(Vocabulary vocab, std::size_t hidden_size, std::size_t embed_size,
                                  std::uint64_t rng_seed) {
    if (hidden_size == 0) throw std::invalid_argument("mLSTM hidden_size must be positive");
    const auto H = static_cast<Eigen::Index>(hidden_size);
    const auto D = static_cast<Eigen::Index>(embed_size == 0 ? hidden_size : embed_size);
    const auto V = static_cast<Eigen::Index>(vocab.size());
    Rng rng(derive_seed(rng_seed, "mlstm-init"));

    MlstmParameters p;
    p.embedding = uniform_matrix(rng, D, V, 1.0 / std::sqrt(static_cast<double>(D)));
    p.w_mx = uniform_matrix(rng, H, D, 1.0 / std::sqrt(static_cast<double>(D)));
    p.w_mh = uniform_matrix(rng, H, H, 1.0 / std::sqrt(static_cast<double>(H)));
    p.w_gx = uniform_matrix(rng, 4 * H, D, 1.0 / std::sqrt(static_cast<double>(D)));
    p.w_gm = uniform_matrix(rng, 4 * H, H, 1.0 / std::sqrt(static_cast<double>(H)));
    p.b_g = VectorXd::Zero(4 * H);
    p.b_g.segment(H, H).setOnes();  // forget-gate bias
    p.w_out = uniform_matrix(rng, V, H, 1.0 / std::sqrt(static_cast<double>(H)));
    p.b_out = VectorXd::Zero(V);

    MlstmModel m;
    m.vocab_ = std::move(vocab);
    m.params_ = std::move(p);
    return m;
}

MlstmModel MlstmModel::from_parameters(Vocabulary vocab, MlstmParameters params, bool trained,
                                       std::optional<SentimentNeuron> neuron) {
    const auto V = static_cast<Eigen::Index>(vocab.size());
    const auto H = params.w_mh.rows();
    const auto D = params.embedding.rows();
    if (params.embedding.cols() != V || params.w_mx.rows() != H || params.w_mx.cols() != D ||
        params.w_mh.cols() != H || params.w_gx.rows() != 4 * H || params.w_gx.cols() != D ||
        params.w_gm.rows() != 4 * H || params.w_gm.cols() != H || params.b_g.size() != 4 * H ||
        params.w_out.rows() != V || params.w_out.cols() != H || params.b_out.size() != V)
        throw std::invalid_argument("mLSTM parameter shapes are inconsistent");
    if (!params.all_finite()) throw std::invalid_argument("mLSTM parameters contain non-finite values");
    MlstmModel m;
    m.vocab_ = std::move(vocab);
    m.params_ = std::move(params);
    m.trained_ = trained;
    if (neuron) m.set_sentiment_neuron(*neuron);
    return m;
}

MlstmModel MlstmModel::train(Vocabulary vocab, std::span<const TokenId> stream, const MlstmConfig& config,
                             MlstmTrainReport* report) {
    config.validate();
    if (stream.size() < 2) throw std::invalid_argument("mLSTM training needs a stream of at least 2 tokens");
    check_stream(vocab, stream);

    MlstmModel model = initialize(std::move(vocab), config.hidden_size, config.embed_size, config.rng_seed);
    MlstmTrainReport local;
    local.initial_loss = model.mean_loss(stream);

    const std::size_t predictions = stream.size() - 1;
    const std::size_t lanes = std::min(config.lanes, predictions);
    const std::size_t lane_len = predictions / lanes;
    const auto H = static_cast<Eigen::Index>(config.hidden_size);

    MlstmParameters& p = model.params_;
    MlstmParameters adam_m = p.zeros_like();
    MlstmParameters adam_v = p.zeros_like();
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        MatrixXd h = MatrixXd::Zero(H, static_cast<Eigen::Index>(lanes));
        MatrixXd c = MatrixXd::Zero(H, static_cast<Eigen::Index>(lanes));
        double epoch_nll = 0.0;
        std::size_t epoch_count = 0;

        for (std::size_t start = 0; start < lane_len; start += config.batch_len) {
            const std::size_t len = std::min(config.batch_len, lane_len - start);
            std::vector<std::vector<TokenId>> inputs(len, std::vector<TokenId>(lanes));
            std::vector<std::vector<TokenId>> targets(len, std::vector<TokenId>(lanes));
            for (std::size_t t = 0; t < len; ++t) {
                for (std::size_t b = 0; b < lanes; ++b) {
                    const std::size_t pos = b * lane_len + start + t;
                    inputs[t][b] = stream[pos];
                    targets[t][b] = stream[pos + 1];
                }
            }
            const double norm = static_cast<double>(len * lanes);
            MlstmParameters grad = p.zeros_like();
            const double nll = run_segment(p, inputs, targets, h, c, &grad, norm);
            ++step;
            if (!std::isfinite(nll)) throw DivergenceError(step, "non-finite loss");
            epoch_nll += nll;
            epoch_count += len * lanes;

            auto g_groups = grad.groups();
            double sq = 0.0;
            for (auto& [name, g] : g_groups) sq += g.squaredNorm();
            if (!std::isfinite(sq)) throw DivergenceError(step, "non-finite gradient");
            const double gnorm = std::sqrt(sq);
            const double scale = gnorm > config.grad_clip ? config.grad_clip / gnorm : 1.0;

            auto p_groups = p.groups();
            auto m_groups = adam_m.groups();
            auto v_groups = adam_v.groups();
            const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t k = 0; k < p_groups.size(); ++k) {
                auto& w = p_groups[k].second;
                auto& mm = m_groups[k].second;
                auto& vv = v_groups[k].second;
                VectorXd g = g_groups[k].second * scale;
                mm = beta1 * mm + (1.0 - beta1) * g;
                vv = beta2 * vv + (1.0 - beta2) * g.cwiseProduct(g);
                w.array() -= config.learning_rate * (mm.array() / bc1) / ((vv.array() / bc2).sqrt() + eps);
            }
        }
        local.epoch_loss.push_back(epoch_count ? epoch_nll / static_cast<double>(epoch_count) : 0.0);
    }
    if (!p.all_finite()) throw DivergenceError(step, "non-finite parameters");

    model.trained_ = true;
    local.final_loss = model.mean_loss(stream);
    if (!std::isfinite(local.final_loss)) throw DivergenceError(step, "non-finite final loss");
    local.steps = step;
    if (report) *report = std::move(local);
    return model;
}

std::unique_ptr<ModelState> MlstmModel::initial_state(const std::optional<ClampSpec>& clamp) const {
    auto s = std::make_unique<MlstmState>();
    const auto H = params_.w_mh.rows();
    s->h = VectorXd::Zero(H);
    s->c = VectorXd::Zero(H);
    if (clamp) {
        if (clamp->neuron >= static_cast<std::size_t>(H))
            throw std::out_of_range("clamp neuron " + std::to_string(clamp->neuron) + " outside hidden size " +
                                    std::to_string(H));
        s->clamp = clamp;
        s->h(static_cast<Eigen::Index>(clamp->neuron)) = clamp->value;
    }
    return s;
}

void MlstmModel::advance(ModelState& state, TokenId token) const {
    if (token >= vocab_.size()) throw std::out_of_range("token id outside vocabulary");
    auto& s = static_cast<MlstmState&>(state);
    const auto H = params_.w_mh.rows();
    const auto x = params_.embedding.col(token);
    VectorXd m = (params_.w_mx * x).cwiseProduct(params_.w_mh * s.h);
    VectorXd g = params_.w_gx * x + params_.w_gm * m + params_.b_g;
    VectorXd i = sigmoid(g.head(H));
    VectorXd f = sigmoid(g.segment(H, H));
    VectorXd o = sigmoid(g.segment(2 * H, H));
    VectorXd u = g.tail(H).array().tanh().matrix();
    s.c = f.cwiseProduct(s.c) + i.cwiseProduct(u);
    s.h = o.cwiseProduct(s.c.array().tanh().matrix());
    if (s.clamp) s.h(static_cast<Eigen::Index>(s.clamp->neuron)) = s.clamp->value;
}

NextTokenDistribution MlstmModel::distribution(const ModelState& state) const {
    const auto& s = static_cast<const MlstmState&>(state);
    VectorXd z = params_.w_out * s.h + params_.b_out;
    const double top = z.maxCoeff();
    VectorXd e = (z.array() - top).exp();
    e /= e.sum();
    return {std::vector<double>(e.data(), e.data() + e.size())};
}

const VectorXd& MlstmModel::hidden(const ModelState& state) {
    const auto* s = dynamic_cast<const MlstmState*>(&state);
    if (!s) throw std::invalid_argument("state does not belong to an mLSTM model");
    return s->h;
}

VectorXd MlstmModel::final_hidden(std::span<const TokenId> seq) const {
    auto state = initial_state();
    for (TokenId t : seq) advance(*state, t);
    return hidden(*state);
}

double MlstmModel::mean_loss(std::span<const TokenId> stream) const {
    if (stream.size() < 2) throw std::invalid_argument("mean_loss needs at least 2 tokens");
    auto state = initial_state();
    advance(*state, stream[0]);
    double nll = 0.0;
    for (std::size_t t = 1; t < stream.size(); ++t) {
        nll -= std::log(distribution(*state)[stream[t]]);
        advance(*state, stream[t]);
    }
    return nll / static_cast<double>(stream.size() - 1);
}

std::pair<double, MlstmParameters> MlstmModel::loss_and_gradient(std::span<const TokenId> stream) const {
    if (stream.size() < 2) throw std::invalid_argument("loss_and_gradient needs at least 2 tokens");
    check_stream(vocab_, stream);
    const std::size_t n = stream.size() - 1;
    std::vector<std::vector<TokenId>> inputs(n), targets(n);
    for (std::size_t t = 0; t < n; ++t) {
        inputs[t] = {stream[t]};
        targets[t] = {stream[t + 1]};
    }
    const auto H = params_.w_mh.rows();
    MatrixXd h = MatrixXd::Zero(H, 1);
    MatrixXd c = MatrixXd::Zero(H, 1);
    MlstmParameters grad = params_.zeros_like();
    const double nll = run_segment(params_, inputs, targets, h, c, &grad, static_cast<double>(n));
    return {nll / static_cast<double>(n), std::move(grad)};
}

void MlstmModel::set_sentiment_neuron(const SentimentNeuron& neuron) {
    if (neuron.index >= hidden_size()) throw std::out_of_range("sentiment neuron index outside hidden size");
    if (neuron.polarity != 1 && neuron.polarity != -1) throw std::invalid_argument("polarity must be +1 or -1");
    neuron_ = neuron;
}

SentimentNeuron select_sentiment_unit(const MatrixXd& activations, std::span<const Sentiment> labels) {
    const auto n = activations.rows();
    if (n == 0 || static_cast<std::size_t>(n) != labels.size())
        throw std::invalid_argument("activation rows must match the label count");
    VectorXd y(n);
    for (Eigen::Index r = 0; r < n; ++r) y(r) = labels[static_cast<std::size_t>(r)] == Sentiment::Positive ? 1.0 : 0.0;
    const double positives = y.sum();
    if (positives == 0.0 || positives == static_cast<double>(n))
        throw std::invalid_argument("sentiment neuron discovery needs both positive and negative examples");

    VectorXd yc = y.array() - y.mean();
    const double y_norm = yc.norm();
    SentimentNeuron best;
    double best_abs = -1.0;
    for (Eigen::Index unit = 0; unit < activations.cols(); ++unit) {
        VectorXd xc = activations.col(unit).array() - activations.col(unit).mean();
        const double x_norm = xc.norm();
        const double r = x_norm > 0.0 ? xc.dot(yc) / (x_norm * y_norm) : 0.0;
        if (std::abs(r) > best_abs) {
            best_abs = std::abs(r);
            best.index = static_cast<std::size_t>(unit);
            best.correlation = r;
            best.polarity = r < 0.0 ? -1 : 1;
        }
    }
    best.low_confidence = best_abs < kNeuronConfidenceFloor;
    return best;
}

SentimentNeuron find_sentiment_neuron(const MlstmModel& model,
                                      std::span<const std::pair<TokenSequence, Sentiment>> labeled) {
    model.require_trained();
    if (labeled.empty()) throw std::invalid_argument("sentiment neuron discovery needs labeled sequences");
    MatrixXd acts(static_cast<Eigen::Index>(labeled.size()), static_cast<Eigen::Index>(model.hidden_size()));
    std::vector<Sentiment> labels;
    labels.reserve(labeled.size());
    for (std::size_t r = 0; r < labeled.size(); ++r) {
        acts.row(static_cast<Eigen::Index>(r)) = model.final_hidden(labeled[r].first).transpose();
        labels.push_back(labeled[r].second);
    }
    return select_sentiment_unit(acts, labels);
}

ClampSpec clamp_for(const SentimentNeuron& neuron, Sentiment target) {
    const double direction = target == Sentiment::Positive ? 1.0 : -1.0;
    return {neuron.index, direction * neuron.polarity};
}

}  // namespace revforge
