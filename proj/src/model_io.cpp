#include "revforge/model_io.hpp"

#include "revforge/mlstm.hpp"
#include "revforge/ngram.hpp"
#include "revforge/serialize.hpp"

namespace revforge {

namespace {

void write_ngram(BinaryWriter& w, const NgramModel& m) {
    w.vocabulary(m.vocabulary());
    w.u32(static_cast<std::uint32_t>(m.order()));
    w.u32(static_cast<std::uint32_t>(m.smoothing().kind));
    w.f64(m.smoothing().add_k);
    w.f64(m.smoothing().discount);
    for (const auto& table : m.raw_counts()) {
        w.u64(table.size());
        for (const auto& [history, counts] : table) {
            for (TokenId t : history) w.u32(t);
            w.u64(counts.next.size());
            for (const auto& [tok, c] : counts.next) {
                w.u32(tok);
                w.u64(c);
            }
        }
    }
}

NgramModel read_ngram(BinaryReader& r) {
    auto vocab = r.vocabulary();
    const std::size_t order = r.u32();
    SmoothingSpec s;
    auto kind = r.u32();
    if (kind > static_cast<std::uint32_t>(Smoothing::KneserNey)) throw FormatError("unknown smoothing tag");
    s.kind = static_cast<Smoothing>(kind);
    s.add_k = r.f64();
    s.discount = r.f64();
    if (order < 1 || order > 64) throw FormatError("implausible n-gram order");
    std::vector<NgramModel::CountTable> raw(order);
    for (std::size_t j = 0; j < order; ++j) {
        const auto n = r.u64();
        for (std::uint64_t e = 0; e < n; ++e) {
            TokenSequence history(j);
            for (auto& t : history) t = r.u32();
            auto& h = raw[j][history];
            const auto next = r.u64();
            for (std::uint64_t k = 0; k < next; ++k) {
                TokenId tok = r.u32();
                auto c = r.u64();
                if (c == 0 || tok >= vocab.size()) throw FormatError("invalid n-gram count entry");
                h.next[tok] = c;
                h.total += c;
            }
        }
    }
    try {
        return NgramModel::from_counts(std::move(vocab), order, s, std::move(raw));
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
}

void write_mlstm(BinaryWriter& w, const MlstmModel& m) {
    w.vocabulary(m.vocabulary());
    w.u8(m.trained() ? 1 : 0);
    const auto& neuron = m.sentiment_neuron();
    w.u8(neuron ? 1 : 0);
    if (neuron) {
        w.u64(neuron->index);
        w.i32(neuron->polarity);
        w.f64(neuron->correlation);
        w.u8(neuron->low_confidence ? 1 : 0);
    }
    const auto& p = m.parameters();
    w.matrix(p.embedding);
    w.matrix(p.w_mx);
    w.matrix(p.w_mh);
    w.matrix(p.w_gx);
    w.matrix(p.w_gm);
    w.vector(p.b_g);
    w.matrix(p.w_out);
    w.vector(p.b_out);
}

MlstmModel read_mlstm(BinaryReader& r) {
    auto vocab = r.vocabulary();
    const bool trained = r.u8() != 0;
    std::optional<SentimentNeuron> neuron;
    if (r.u8() != 0) {
        SentimentNeuron n;
        n.index = r.u64();
        n.polarity = r.i32();
        n.correlation = r.f64();
        n.low_confidence = r.u8() != 0;
        neuron = n;
    }
    MlstmParameters p;
    p.embedding = r.matrix();
    p.w_mx = r.matrix();
    p.w_mh = r.matrix();
    p.w_gx = r.matrix();
    p.w_gm = r.matrix();
    p.b_g = r.vector();
    p.w_out = r.matrix();
    p.b_out = r.vector();
    try {
        return MlstmModel::from_parameters(std::move(vocab), std::move(p), trained, neuron);
    } catch (const std::exception& e) {
        throw FormatError(e.what());
    }
}

}  // namespace

std::string serialize_language_model(const LanguageModel& model) {
    BinaryWriter w;
    switch (model.kind()) {
        case ModelKind::Ngram:
            model.require_trained();
            w.header(ContainerKind::Ngram);
            write_ngram(w, static_cast<const NgramModel&>(model));
            break;
        case ModelKind::Mlstm:
            w.header(ContainerKind::Mlstm);
            write_mlstm(w, static_cast<const MlstmModel&>(model));
            break;
        case ModelKind::Uniform:
            w.header(ContainerKind::Uniform);
            w.vocabulary(model.vocabulary());
            break;
    }
    return w.bytes();
}

std::unique_ptr<LanguageModel> deserialize_language_model(std::string_view bytes) {
    BinaryReader r(bytes);
    std::unique_ptr<LanguageModel> out;
    switch (r.header()) {
        case ContainerKind::Ngram: out = std::make_unique<NgramModel>(read_ngram(r)); break;
        case ContainerKind::Mlstm: out = std::make_unique<MlstmModel>(read_mlstm(r)); break;
        case ContainerKind::Uniform: out = std::make_unique<UniformModel>(r.vocabulary()); break;
        default: throw FormatError("RFLM container does not hold a language model");
    }
    r.expect_end();
    return out;
}

void save_language_model(const LanguageModel& model, const std::filesystem::path& path) {
    write_file(path, serialize_language_model(model));
}

std::unique_ptr<LanguageModel> load_language_model(const std::filesystem::path& path) {
    return deserialize_language_model(read_file_bytes(path));
}

}  // namespace revforge
