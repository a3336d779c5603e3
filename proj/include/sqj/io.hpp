#pragma once

// Binary file formats: SQJ2 parameter files and SQT0 tensor files.
// All multi-byte fields are little-endian.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sqj/network.hpp"
#include "sqj/tensor.hpp"

namespace sqj {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Bytes = std::vector<std::uint8_t>;

// SQJ2 version 1 carries int8 codes; version 2 carries float32 values
// (FLw/FLb fields are written as 0 and ignored).
inline constexpr std::uint16_t kParamVersionFixed = 1;
inline constexpr std::uint16_t kParamVersionReal = 2;

Bytes save_params(const QParamSet& params);
Bytes save_params(const RParamSet& params);

/// Parses SQJ2 and checks every blob against the conv nodes of the graph.
QParamSet load_params(std::span<const std::uint8_t> bytes, const NetworkGraph& graph);
RParamSet load_real_params(std::span<const std::uint8_t> bytes, const NetworkGraph& graph);
/// Reads the version field of an SQJ2 buffer.
std::uint16_t param_version(std::span<const std::uint8_t> bytes);

enum class DType : std::uint8_t { Int8 = 0, Real32 = 1 };

using AnyMap = std::variant<QMap, RMap>;

Bytes write_tensor(const QMap& m);
Bytes write_tensor(const RMap& m);
AnyMap read_tensor(std::span<const std::uint8_t> bytes);
/// Reads and checks dtype (and shape, when expected is non-empty).
QMap read_qtensor(std::span<const std::uint8_t> bytes, Shape expected = {});
RMap read_rtensor(std::span<const std::uint8_t> bytes, Shape expected = {});

Bytes read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::span<const std::uint8_t> bytes);
std::string read_text(const std::filesystem::path& p);
void write_text(const std::filesystem::path& p, const std::string& text);

}  // namespace sqj
