// SPDX-License-Identifier: Apache-2.0
#include "flowtok/numerics/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "flowtok/error.hpp"

namespace flowtok::num {

namespace {

constexpr std::array<char, 8> kMagic{'F', 'T', 'O', 'K', 'C', 'K', 'P', 'T'};

template <class T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(const unsigned char* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
}

void put_tensor(std::string& out, const Tensor& t) {
    for (double d : t.data()) put_le(out, std::bit_cast<std::uint64_t>(d));
}

Tensor get_tensor(const unsigned char*& p, const unsigned char* end, const Shape& shape) {
    Tensor t(shape);
    if (static_cast<std::size_t>(end - p) < t.size() * 8) throw UserError("checkpoint: truncated payload");
    for (auto& d : t.data()) {
        d = std::bit_cast<double>(get_le<std::uint64_t>(p));
        p += 8;
    }
    return t;
}

}  // namespace

Checkpoint snapshot(const ParameterStore& store, nlohmann::json meta) {
    Checkpoint ckpt;
    ckpt.meta = std::move(meta);
    ckpt.step = store.step();
    for (const auto& e : store.entries()) {
        ckpt.tensors.push_back({e.name, e.param.value(), e.first_moment, e.second_moment});
    }
    return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["meta"] = ckpt.meta;
    header["step"] = ckpt.step;
    header["tensors"] = nlohmann::json::array();
    std::string payload;
    for (const auto& t : ckpt.tensors) {
        header["tensors"].push_back({{"name", t.name}, {"shape", t.value.shape()}, {"offset", payload.size()}});
        put_tensor(payload, t.value);
        put_tensor(payload, t.first_moment);
        put_tensor(payload, t.second_moment);
    }
    const std::string header_text = header.dump();

    std::string out(kMagic.begin(), kMagic.end());
    put_le(out, kCheckpointVersion);
    put_le(out, static_cast<std::uint64_t>(header_text.size()));
    out += header_text;
    out += payload;

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw UserError("checkpoint: cannot open '" + path.string() + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw UserError("checkpoint: write failed for '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UserError("checkpoint: cannot open '" + path.string() + "'");
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const auto* end = p + bytes.size();
    if (bytes.size() < 20 || std::memcmp(p, kMagic.data(), kMagic.size()) != 0) {
        throw UserError("checkpoint: '" + path.string() + "' is not a checkpoint file");
    }
    p += kMagic.size();
    const auto version = get_le<std::uint32_t>(p);
    p += 4;
    if (version != kCheckpointVersion) {
        throw UserError("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto header_len = get_le<std::uint64_t>(p);
    p += 8;
    if (static_cast<std::uint64_t>(end - p) < header_len) throw UserError("checkpoint: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(p), header_len));
    } catch (const nlohmann::json::exception& e) {
        throw UserError(std::string("checkpoint: malformed header: ") + e.what());
    }
    p += header_len;

    Checkpoint ckpt;
    ckpt.meta = header.value("meta", nlohmann::json::object());
    ckpt.step = header.value("step", std::uint64_t{0});
    for (const auto& t : header.at("tensors")) {
        const Shape shape = t.at("shape").get<Shape>();
        CheckpointTensor ct;
        ct.name = t.at("name").get<std::string>();
        ct.value = get_tensor(p, end, shape);
        ct.first_moment = get_tensor(p, end, shape);
        ct.second_moment = get_tensor(p, end, shape);
        ckpt.tensors.push_back(std::move(ct));
    }
    return ckpt;
}

void restore(const Checkpoint& ckpt, ParameterStore& store) {
    std::map<std::string, const CheckpointTensor*> by_name;
    for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
    for (auto& e : store.entries()) {
        auto it = by_name.find(e.name);
        if (it == by_name.end()) throw UserError("checkpoint: missing parameter '" + e.name + "'");
        const CheckpointTensor& t = *it->second;
        if (t.value.shape() != e.param.shape()) {
            throw UserError("checkpoint: parameter '" + e.name + "' has shape " + shape_str(t.value.shape()) +
                            ", model expects " + shape_str(e.param.shape()));
        }
        e.param.mutable_value() = t.value;
        e.first_moment = t.first_moment;
        e.second_moment = t.second_moment;
        e.param.grad_buffer().fill(0.0);
    }
    if (by_name.size() != store.entries().size()) {
        throw UserError("checkpoint: holds " + std::to_string(by_name.size()) + " parameters, model has " +
                        std::to_string(store.entries().size()));
    }
    store.set_step(ckpt.step);
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, nlohmann::json meta) {
    write_checkpoint(path, snapshot(store, std::move(meta)));
}

}  // namespace flowtok::num
