#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sparkprop/tensor/tensor.hpp"

namespace sparkprop::tensor {

/// Named tensors plus string metadata, serialized as:
///
///   "SPKV" | u32 version | u64 manifest length | manifest | payload
///
/// The manifest is JSON listing each tensor's name, shape, dtype ("f32" or
/// "f64") and byte offset into the payload; payloads are raw little-endian.
/// All integers in the header are little-endian.
class Checkpoint {
public:
    static constexpr std::uint32_t kVersion = 1;

    using Entry = std::variant<Tensor<float>, Tensor<double>>;

    void put(const std::string& name, const Tensor<float>& t) { tensors_[name] = t.clone(); }
    void put(const std::string& name, const Tensor<double>& t) { tensors_[name] = t.clone(); }
    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    /// Throws NotFound for missing names and InvalidArgument for dtype mismatches.
    Tensor<float> get_f32(const std::string& name) const;
    Tensor<double> get_f64(const std::string& name) const;
    std::vector<std::string> names() const;

    std::map<std::string, std::string>& metadata() { return metadata_; }
    const std::map<std::string, std::string>& metadata() const { return metadata_; }
    std::optional<std::string> meta(const std::string& key) const;

    std::vector<std::uint8_t> serialize() const;
    static Checkpoint deserialize(std::span<const std::uint8_t> bytes);

    /// Writes to a temporary sibling and renames, so readers never observe a
    /// partially written file.
    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

private:
    std::map<std::string, Entry> tensors_;
    std::map<std::string, std::string> metadata_;
};

}  // namespace sparkprop::tensor
