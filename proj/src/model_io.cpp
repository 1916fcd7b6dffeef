#include "swm/model_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "json.hpp"

namespace swm {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "model I/O assumes a little-endian host");

namespace {

const char* kind_tag(FormatError::Kind k) {
    switch (k) {
        case FormatError::Kind::BadMagic: return "format.magic";
        case FormatError::Kind::VersionMismatch: return "format.version";
        case FormatError::Kind::Truncated: return "format.truncated";
        case FormatError::Kind::HeaderInconsistent: return "format.header";
    }
    return "format";
}

template <class M>
struct TensorRef {
    std::string name;
    M* tensor;
};

// Canonical tensor order shared by writer and reader. Works on a const model
// (writing) and a mutable one (reading into pre-sized layers).
template <class ModelT, class M = std::conditional_t<std::is_const_v<ModelT>, const Matrix, Matrix>>
std::vector<TensorRef<M>> manifest(ModelT& m, std::vector<Matrix>& scales) {
    std::vector<TensorRef<M>> out;
    out.push_back({"tok_embed", &m.tok_embed});
    out.push_back({"pos_embed", &m.pos_embed});
    scales.clear();
    scales.reserve(m.layers.size());
    for (const auto& l : m.layers) scales.emplace_back(1, 1, l.residual_scale);
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const std::string p = "layers." + std::to_string(i) + ".";
        m.layers[i].for_each_tensor([&](const char* name, M& t) { out.push_back({p + name, &t}); });
        out.push_back({p + "residual_scale", &scales[i]});
    }
    out.push_back({"final_norm", &m.final_norm});
    out.push_back({"lm_head", &m.lm_head});
    return out;
}

void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

std::uint32_t get_u32(const std::string& in, std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, in.data() + off, 4);
    return v;
}

json config_to_json(const ModelConfig& c) {
    return json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},   {"n_heads", c.n_heads},
                {"head_dim", c.head_dim},     {"d_ff", c.d_ff},         {"n_layers", c.n_layers},
                {"max_seq", c.max_seq},       {"norm_eps", c.norm_eps}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.head_dim = j.value("head_dim", std::size_t{0});
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.max_seq = j.at("max_seq").get<std::size_t>();
    c.norm_eps = j.value("norm_eps", 1e-5);
    return c;
}

}  // namespace

FormatError::FormatError(Kind kind, const std::string& message)
    : Error(kind_tag(kind), message), kind_(kind) {}

std::string serialize_model(const Model& model) {
    model.validate();
    std::vector<Matrix> scales;
    const auto tensors = manifest(model, scales);

    json header;
    header["config"] = config_to_json(model.config);
    json entries = json::array();
    for (const auto& t : tensors)
        entries.push_back({{"name", t.name}, {"rows", t.tensor->rows()}, {"cols", t.tensor->cols()}});
    header["tensors"] = std::move(entries);
    std::vector<std::uint32_t> labels;
    for (const auto& l : model.layers) labels.push_back(l.original_index);
    header["original_index"] = labels;
    const std::string header_text = header.dump();

    std::string out(kModelMagic, 4);
    put_u32(out, kModelFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out += header_text;
    for (const auto& t : tensors) {
        const auto flat = t.tensor->flat();
        out.append(reinterpret_cast<const char*>(flat.data()), flat.size() * sizeof(float));
    }
    return out;
}

Model deserialize_model(const std::string& bytes) {
    using Kind = FormatError::Kind;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
        throw FormatError(Kind::BadMagic, "not a model file (bad magic)");
    }
    if (bytes.size() < 12) throw FormatError(Kind::Truncated, "file ends inside the preamble");
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kModelFormatVersion) {
        throw FormatError(Kind::VersionMismatch, "unsupported format version " +
                                                     std::to_string(version) + " (expected " +
                                                     std::to_string(kModelFormatVersion) + ")");
    }
    const std::uint32_t header_len = get_u32(bytes, 8);
    if (bytes.size() < 12 + static_cast<std::size_t>(header_len)) {
        throw FormatError(Kind::Truncated, "file ends inside the header");
    }

    Model m;
    json header;
    std::vector<std::tuple<std::string, std::size_t, std::size_t>> entries;
    std::vector<std::uint32_t> labels;
    try {
        header = json::parse(bytes.substr(12, header_len));
        m.config = config_from_json(header.at("config"));
        for (const auto& e : header.at("tensors"))
            entries.emplace_back(e.at("name").get<std::string>(), e.at("rows").get<std::size_t>(),
                                 e.at("cols").get<std::size_t>());
        labels = header.at("original_index").get<std::vector<std::uint32_t>>();
    } catch (const json::exception& e) {
        throw FormatError(Kind::HeaderInconsistent, std::string("bad header: ") + e.what());
    }
    if (labels.size() != m.config.n_layers) {
        throw FormatError(Kind::HeaderInconsistent,
                          "original_index list length does not match n_layers");
    }

    // Build an empty model with the header's shapes, then fill tensors in
    // manifest order.
    m.layers.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) m.layers[i].original_index = labels[i];
    std::vector<Matrix> scales;
    auto expected = manifest(m, scales);
    if (expected.size() != entries.size()) {
        throw FormatError(Kind::HeaderInconsistent, "tensor manifest has " +
                                                        std::to_string(entries.size()) +
                                                        " entries, expected " +
                                                        std::to_string(expected.size()));
    }

    std::size_t offset = 12 + header_len;
    for (std::size_t t = 0; t < entries.size(); ++t) {
        const auto& [name, rows, cols] = entries[t];
        if (name != expected[t].name) {
            throw FormatError(Kind::HeaderInconsistent, "manifest entry " + std::to_string(t) +
                                                            " is '" + name + "', expected '" +
                                                            expected[t].name + "'");
        }
        const std::size_t n_bytes = rows * cols * sizeof(float);
        if (bytes.size() < offset + n_bytes) {
            throw FormatError(Kind::Truncated, "payload truncated in tensor '" + name + "'");
        }
        std::vector<float> data(rows * cols);
        if (n_bytes) std::memcpy(data.data(), bytes.data() + offset, n_bytes);
        offset += n_bytes;
        *expected[t].tensor = Matrix(rows, cols, std::move(data));
    }
    if (offset != bytes.size()) {
        throw FormatError(Kind::HeaderInconsistent,
                          std::to_string(bytes.size() - offset) + " trailing bytes after payload");
    }
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        if (!scales[i].same_shape(Matrix(1, 1))) {
            throw FormatError(Kind::HeaderInconsistent, "residual_scale of layer " +
                                                            std::to_string(i) + " is not 1x1");
        }
        m.layers[i].residual_scale = scales[i](0, 0);
    }
    try {
        m.validate();
    } catch (const Error& e) {
        throw FormatError(Kind::HeaderInconsistent, e.what());
    }
    return m;
}

std::string config_to_json_text(const ModelConfig& config) {
    return config_to_json(config).dump(2) + "\n";
}

ModelConfig config_from_json_text(const std::string& text) {
    ModelConfig c;
    try {
        c = config_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("failed writing '" + path + "'");
}

void save_model(const Model& model, const std::string& path) {
    write_file(path, serialize_model(model));
}

Model load_model(const std::string& path) { return deserialize_model(read_file(path)); }

std::string serialize_calib(const CalibSet& calib) {
    std::string out;
    for (const auto& s : calib.sequences) out += json{{"tokens", s}}.dump() + "\n";
    return out;
}

CalibSet parse_calib(const std::string& text) {
    CalibSet c;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            c.sequences.push_back(json::parse(line).at("tokens").get<TokenSeq>());
        } catch (const json::exception& e) {
            throw InputError("calibration line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (c.sequences.empty()) throw InputError("calibration file has no sequences");
    return c;
}

void save_calib(const CalibSet& calib, const std::string& path) {
    write_file(path, serialize_calib(calib));
}

CalibSet load_calib(const std::string& path) { return parse_calib(read_file(path)); }

}  // namespace swm
