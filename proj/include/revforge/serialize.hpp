#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "revforge/corpus.hpp"

namespace revforge {

/// Kind tags of the "RFLM" container. Language models share the numbering of
/// ModelKind.
enum class ContainerKind : std::uint32_t { Ngram = 1, Mlstm = 2, Uniform = 3, SentimentClassifier = 16 };

inline constexpr char kContainerMagic[4] = {'R', 'F', 'L', 'M'};
inline constexpr std::uint32_t kContainerVersion = 1;

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Little-endian writer into an in-memory buffer.
class BinaryWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v);
    void str(std::string_view s);
    void matrix(const Eigen::MatrixXd& m);
    void vector(const Eigen::VectorXd& v);
    void vocabulary(const Vocabulary& vocab);

    /// Magic, version and kind tag.
    void header(ContainerKind kind);

    const std::string& bytes() const { return bytes_; }

private:
    std::string bytes_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::string_view bytes) : bytes_(bytes) {}

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64();
    std::string str();
    Eigen::MatrixXd matrix();
    Eigen::VectorXd vector();
    Vocabulary vocabulary();

    /// Checks magic and version; returns the kind tag.
    ContainerKind header();

    bool at_end() const { return pos_ == bytes_.size(); }
    void expect_end() const;

private:
    std::string_view take(std::size_t n);

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file_bytes(const std::filesystem::path& path);

}  // namespace revforge
