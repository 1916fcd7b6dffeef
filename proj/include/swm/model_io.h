#pragma once

#include <cstdint>
#include <string>

#include "swm/error.h"
#include "swm/model.h"

namespace swm {

// Binary model file:
//   "SWM1" | u32 LE format version | u32 LE header length | header (UTF-8 JSON)
//   | tensors in manifest order as raw little-endian float32, row-major.
// The header carries the config, the tensor manifest (name, rows, cols) and
// the original_index label of every layer.
inline constexpr char kModelMagic[4] = {'S', 'W', 'M', '1'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

class FormatError : public Error {
public:
    enum class Kind { BadMagic, VersionMismatch, Truncated, HeaderInconsistent };

    FormatError(Kind kind, const std::string& message);
    Kind format_kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

std::string serialize_model(const Model& model);
Model deserialize_model(const std::string& bytes);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

// JSON lines, one {"tokens": [...]} object per line.
std::string serialize_calib(const CalibSet& calib);
CalibSet parse_calib(const std::string& text);
void save_calib(const CalibSet& calib, const std::string& path);
CalibSet load_calib(const std::string& path);

// Model config as a JSON object with the ModelConfig field names. head_dim
// and norm_eps are optional on input.
std::string config_to_json_text(const ModelConfig& config);
ModelConfig config_from_json_text(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace swm
