#include "picg/serialize.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace picg {

namespace {
constexpr const char* kCheckpointMagic = "PICG-CKPT-1";
}

void write_f32_le(std::ostream& os, const float* data, size_t n) {
    std::vector<unsigned char> buf(n * 4);
    for (size_t i = 0; i < n; ++i) {
        uint32_t bits;
        std::memcpy(&bits, &data[i], 4);
        buf[i * 4 + 0] = (unsigned char)(bits & 0xff);
        buf[i * 4 + 1] = (unsigned char)((bits >> 8) & 0xff);
        buf[i * 4 + 2] = (unsigned char)((bits >> 16) & 0xff);
        buf[i * 4 + 3] = (unsigned char)((bits >> 24) & 0xff);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
}

std::vector<float> read_f32_le(std::istream& is, size_t n) {
    std::vector<unsigned char> buf(n * 4);
    is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    if (size_t(is.gcount()) != buf.size()) throw io_error("truncated float32 payload");
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) {
        const uint32_t bits = uint32_t(buf[i * 4]) | (uint32_t(buf[i * 4 + 1]) << 8) |
                              (uint32_t(buf[i * 4 + 2]) << 16) |
                              (uint32_t(buf[i * 4 + 3]) << 24);
        std::memcpy(&out[i], &bits, 4);
    }
    return out;
}

void write_f32_file(const std::filesystem::path& path, const std::vector<float>& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path.string());
    write_f32_le(os, data.data(), data.size());
    if (!os) throw io_error("write failed: " + path.string());
}

std::vector<float> read_f32_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path.string());
    is.seekg(0, std::ios::end);
    const auto bytes = is.tellg();
    is.seekg(0);
    if (bytes < 0 || bytes % 4 != 0) throw io_error("malformed float32 file: " + path.string());
    return read_f32_le(is, size_t(bytes) / 4);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path.string());
    os << content;
    if (!os) throw io_error("write failed: " + path.string());
}

CheckpointInfo save_checkpoint(const std::filesystem::path& path, const std::string& stage,
                               const std::string& config_digest, const ParamStore& params) {
    std::vector<float> blob;
    nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
    int64_t offset = 0;
    for (const auto& [name, var] : params.items()) {
        nlohmann::ordered_json entry;
        entry["name"] = name;
        entry["shape"] = var->value.shape();
        entry["offset"] = offset;
        manifest.push_back(entry);
        for (int64_t i = 0; i < var->value.numel(); ++i)
            blob.push_back(float(var->value[i]));
        offset += var->value.numel();
    }

    std::ostringstream blob_bytes;
    write_f32_le(blob_bytes, blob.data(), blob.size());
    const std::string payload = blob_bytes.str();
    const std::string blob_digest = hex64(fnv1a64(payload.data(), payload.size()));

    nlohmann::ordered_json header;
    header["stage"] = stage;
    header["config_digest"] = config_digest;
    header["blob_f32_count"] = offset;
    header["blob_digest"] = blob_digest;
    header["params"] = manifest;

    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path.string());
    os << kCheckpointMagic << "\n" << header.dump() << "\n" << payload;
    if (!os) throw io_error("write failed: " + path.string());
    return CheckpointInfo{stage, config_digest, blob_digest};
}

namespace {

nlohmann::json read_checkpoint_header(std::istream& is, const std::filesystem::path& path) {
    std::string magic, header_line;
    if (!std::getline(is, magic) || magic != kCheckpointMagic)
        throw load_error("not a checkpoint file: " + path.string());
    if (!std::getline(is, header_line))
        throw load_error("checkpoint header missing: " + path.string());
    try {
        return nlohmann::json::parse(header_line);
    } catch (const std::exception& e) {
        throw load_error("checkpoint header unreadable: " + path.string() + ": " + e.what());
    }
}

}  // namespace

CheckpointInfo load_checkpoint(const std::filesystem::path& path, ParamStore& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw state_error("checkpoint not found: " + path.string());
    const nlohmann::json header = read_checkpoint_header(is, path);
    const int64_t count = header.at("blob_f32_count").get<int64_t>();
    const std::vector<float> blob = read_f32_le(is, size_t(count));

    std::ostringstream blob_bytes;
    write_f32_le(blob_bytes, blob.data(), blob.size());
    const std::string payload = blob_bytes.str();
    const std::string digest = hex64(fnv1a64(payload.data(), payload.size()));
    if (digest != header.at("blob_digest").get<std::string>())
        throw load_error("checkpoint blob digest mismatch: " + path.string());

    for (const auto& entry : header.at("params")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<int64_t>>();
        const int64_t offset = entry.at("offset").get<int64_t>();
        if (!params.contains(name))
            throw load_error("checkpoint parameter not in model: " + name);
        Var var = params.find(name);
        if (var->value.shape() != shape)
            throw load_error("checkpoint shape mismatch for " + name);
        for (int64_t i = 0; i < var->value.numel(); ++i)
            var->value[i] = double(blob[size_t(offset + i)]);
    }
    return CheckpointInfo{header.at("stage").get<std::string>(),
                          header.at("config_digest").get<std::string>(),
                          header.at("blob_digest").get<std::string>()};
}

CheckpointInfo peek_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw state_error("checkpoint not found: " + path.string());
    const nlohmann::json header = read_checkpoint_header(is, path);
    return CheckpointInfo{header.at("stage").get<std::string>(),
                          header.at("config_digest").get<std::string>(),
                          header.at("blob_digest").get<std::string>()};
}

}  // namespace picg
