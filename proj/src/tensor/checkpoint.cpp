#include "sparkprop/tensor/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "json.hpp"

#include "sparkprop/bytes.hpp"

namespace sparkprop::tensor {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

constexpr char kMagic[4] = {'S', 'P', 'K', 'V'};

void put_u32(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t offset, int width) {
    if (offset + static_cast<std::size_t>(width) > bytes.size()) throw ParseError("truncated checkpoint header", offset);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
    return v;
}

template <typename T>
void append_payload(Bytes& payload, const Tensor<T>& t) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.raw());
    payload.insert(payload.end(), p, p + t.numel() * sizeof(T));
}

}  // namespace

Tensor<float> Checkpoint::get_f32(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw NotFound("checkpoint has no tensor '" + name + "'");
    if (const auto* t = std::get_if<Tensor<float>>(&it->second)) return t->clone();
    throw InvalidArgument("checkpoint tensor '" + name + "' is not f32");
}

Tensor<double> Checkpoint::get_f64(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw NotFound("checkpoint has no tensor '" + name + "'");
    if (const auto* t = std::get_if<Tensor<double>>(&it->second)) return t->clone();
    throw InvalidArgument("checkpoint tensor '" + name + "' is not f64");
}

std::vector<std::string> Checkpoint::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : tensors_) out.push_back(name);
    return out;
}

std::optional<std::string> Checkpoint::meta(const std::string& key) const {
    auto it = metadata_.find(key);
    if (it == metadata_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
    nlohmann::json manifest;
    manifest["tensors"] = nlohmann::json::array();
    Bytes payload;
    for (const auto& [name, entry] : tensors_) {
        nlohmann::json item;
        item["name"] = name;
        item["offset"] = payload.size();
        std::visit(
            [&](const auto& t) {
                using T = typename std::decay_t<decltype(t)>::value_type;
                item["shape"] = t.shape();
                item["dtype"] = std::is_same_v<T, float> ? "f32" : "f64";
                item["nbytes"] = t.numel() * sizeof(T);
                append_payload(payload, t);
            },
            entry);
        manifest["tensors"].push_back(std::move(item));
    }
    manifest["metadata"] = metadata_;
    const std::string text = manifest.dump();

    Bytes out(kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Checkpoint Checkpoint::deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw ParseError("bad checkpoint magic", 0);
    const auto version = get_le(bytes, 4, 4);
    if (version != kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);
    const auto manifest_len = get_le(bytes, 8, 8);
    const std::size_t manifest_start = 16;
    if (manifest_len > bytes.size() - manifest_start) throw ParseError("truncated checkpoint manifest", manifest_start);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + manifest_start,
                                         bytes.begin() + static_cast<std::ptrdiff_t>(manifest_start + manifest_len));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed checkpoint manifest: ") + e.what(), manifest_start);
    }
    const std::size_t payload_start = manifest_start + manifest_len;
    const std::size_t payload_size = bytes.size() - payload_start;

    Checkpoint ckpt;
    try {
        for (const auto& item : manifest.at("tensors")) {
            const auto name = item.at("name").get<std::string>();
            const auto shape = item.at("shape").get<Shape>();
            const auto dtype = item.at("dtype").get<std::string>();
            const auto offset = item.at("offset").get<std::size_t>();
            const std::size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
            if (width == 0) throw ParseError("unknown dtype '" + dtype + "' for tensor " + name, manifest_start);
            const std::size_t nbytes = numel(shape) * width;
            if (offset > payload_size || nbytes > payload_size - offset) {
                throw ParseError("tensor '" + name + "' exceeds payload", payload_start + offset);
            }
            const auto* src = bytes.data() + payload_start + offset;
            if (width == 4) {
                std::vector<float> v(numel(shape));
                std::memcpy(v.data(), src, nbytes);
                ckpt.tensors_[name] = Tensor<float>(shape, std::move(v));
            } else {
                std::vector<double> v(numel(shape));
                std::memcpy(v.data(), src, nbytes);
                ckpt.tensors_[name] = Tensor<double>(shape, std::move(v));
            }
        }
        if (manifest.contains("metadata")) {
            ckpt.metadata_ = manifest.at("metadata").get<std::map<std::string, std::string>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed checkpoint manifest: ") + e.what(), manifest_start);
    } catch (const ShapeError& e) {
        throw ParseError(std::string("bad tensor shape in checkpoint: ") + e.what(), manifest_start);
    }
    return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    write_file_atomic(path, serialize());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    return deserialize(read_file(path));
}

}  // namespace sparkprop::tensor
