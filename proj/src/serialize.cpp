#include "revforge/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace revforge {

void BinaryWriter::u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) bytes_.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void BinaryWriter::u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) bytes_.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::str(std::string_view s) {
    u64(s.size());
    bytes_.append(s);
}

void BinaryWriter::matrix(const Eigen::MatrixXd& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.size(); ++k) f64(m.data()[k]);
}

void BinaryWriter::vector(const Eigen::VectorXd& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index k = 0; k < v.size(); ++k) f64(v[k]);
}

void BinaryWriter::vocabulary(const Vocabulary& vocab) {
    u64(vocab.size());
    for (const auto& t : vocab.tokens()) str(t);
}

void BinaryWriter::header(ContainerKind kind) {
    bytes_.append(kContainerMagic, 4);
    u32(kContainerVersion);
    u32(static_cast<std::uint32_t>(kind));
}

std::string_view BinaryReader::take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw FormatError("truncated RFLM container");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
}

std::uint8_t BinaryReader::u8() { return static_cast<std::uint8_t>(take(1)[0]); }

std::uint32_t BinaryReader::u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[k])) << (8 * k);
    return v;
}

std::uint64_t BinaryReader::u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[k])) << (8 * k);
    return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinaryReader::str() {
    auto n = u64();
    return std::string(take(n));
}

Eigen::MatrixXd BinaryReader::matrix() {
    auto rows = u64();
    auto cols = u64();
    if (rows != 0 && cols > (bytes_.size() - pos_) / 8 / rows) throw FormatError("matrix larger than container");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = f64();
    return m;
}

Eigen::VectorXd BinaryReader::vector() {
    auto n = u64();
    if (n > (bytes_.size() - pos_) / 8) throw FormatError("vector larger than container");
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = f64();
    return v;
}

Vocabulary BinaryReader::vocabulary() {
    auto n = u64();
    if (n < kReservedCount) throw FormatError("vocabulary lacks reserved tokens");
    std::vector<std::string> tokens;
    for (std::uint64_t k = 0; k < n; ++k) {
        auto t = str();
        if (k < kReservedCount) {
            Vocabulary reserved;
            if (t != reserved.token_at(static_cast<TokenId>(k))) throw FormatError("reserved token mismatch");
            continue;
        }
        tokens.push_back(std::move(t));
    }
    try {
        return Vocabulary::from_tokens(std::move(tokens));
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
}

ContainerKind BinaryReader::header() {
    auto magic = take(4);
    if (std::memcmp(magic.data(), kContainerMagic, 4) != 0) throw FormatError("not an RFLM container");
    auto version = u32();
    if (version != kContainerVersion)
        throw FormatError("unsupported RFLM version " + std::to_string(version));
    return static_cast<ContainerKind>(u32());
}

void BinaryReader::expect_end() const {
    if (pos_ != bytes_.size()) throw FormatError("trailing bytes after RFLM payload");
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace revforge
