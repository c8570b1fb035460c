#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mofs/errors.hpp"
#include "mofs/field.hpp"

namespace mofs {

// Dataset file layout:
//   "MOFS" magic, version u8 = 1,
//   u32 LE header length, UTF-8 JSON header
//     {name, operator_id, N, H, W, generator_params, normalizers, description_text},
//   raw little-endian float32 blocks: a-block [N*H*W], u-block [N*H*W].

namespace io_detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
    char b[4];
    b[0] = static_cast<char>(v & 0xff);
    b[1] = static_cast<char>((v >> 8) & 0xff);
    b[2] = static_cast<char>((v >> 16) & 0xff);
    b[3] = static_cast<char>((v >> 24) & 0xff);
    buf.append(b, 4);
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void append_f32_block(std::string& buf, const Tensor& t) {
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        const float f = static_cast<float>(t[i]);
        char b[4];
        std::memcpy(b, &f, 4);
        buf.append(b, 4);
    }
}

} // namespace io_detail

inline std::string serialize_dataset(const OperatorDataset& ds) {
    nlohmann::json params;
    for (const auto& [k, v] : ds.generator_params) params[k] = v;
    nlohmann::json header = {
        {"name", ds.name},
        {"operator_id", ds.operator_id},
        {"N", ds.size()},
        {"H", ds.height()},
        {"W", ds.width()},
        {"generator_params", params},
        {"normalizers",
         {{"a", {{"mean", ds.norm_a.mean}, {"std", ds.norm_a.std}}},
          {"u", {{"mean", ds.norm_u.mean}, {"std", ds.norm_u.std}}}}},
        {"description_text", ds.description_text}};
    const std::string hjson = header.dump();

    std::string buf;
    buf.reserve(16 + hjson.size() + static_cast<std::size_t>(ds.size()) * ds.height() *
                                        ds.width() * 8);
    buf += "MOFS";
    buf += static_cast<char>(1); // version
    io_detail::put_u32(buf, static_cast<std::uint32_t>(hjson.size()));
    buf += hjson;
    for (const auto& [a, u] : ds.samples) io_detail::append_f32_block(buf, a.values);
    for (const auto& [a, u] : ds.samples) io_detail::append_f32_block(buf, u.values);
    return buf;
}

inline void save_dataset(const OperatorDataset& ds, const std::string& path) {
    const std::string buf = serialize_dataset(ds);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_dataset: cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("save_dataset: write failed for '" + path + "'");
}

inline OperatorDataset deserialize_dataset(const std::string& buf) {
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    if (buf.size() < 9) throw IoError("load_dataset: truncated file (no header)");
    if (std::memcmp(p, "MOFS", 4) != 0) throw IoError("load_dataset: magic-number mismatch");
    if (p[4] != 1) throw IoError("load_dataset: unsupported version");
    const std::uint32_t hlen = io_detail::get_u32(p + 5);
    if (buf.size() < 9 + static_cast<std::size_t>(hlen))
        throw IoError("load_dataset: truncated file (header)");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.substr(9, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("load_dataset: bad JSON header: ") + e.what());
    }

    OperatorDataset ds;
    try {
        ds.name = header.at("name").get<std::string>();
        ds.operator_id = header.at("operator_id").get<int>();
        ds.description_text = header.at("description_text").get<std::string>();
        for (auto it = header.at("generator_params").begin();
             it != header.at("generator_params").end(); ++it)
            ds.generator_params[it.key()] = it.value().get<double>();
        ds.norm_a.mean = header.at("normalizers").at("a").at("mean").get<double>();
        ds.norm_a.std = header.at("normalizers").at("a").at("std").get<double>();
        ds.norm_a.role = FieldRole::input_a;
        ds.norm_u.mean = header.at("normalizers").at("u").at("mean").get<double>();
        ds.norm_u.std = header.at("normalizers").at("u").at("std").get<double>();
        ds.norm_u.role = FieldRole::output_u;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("load_dataset: header field error: ") + e.what());
    }

    const long long n = header.at("N").get<long long>();
    const long long h = header.at("H").get<long long>();
    const long long w = header.at("W").get<long long>();
    if (n < 0 || h <= 0 || w <= 0)
        throw IoError("load_dataset: non-positive shape in header");
    const std::size_t expected = static_cast<std::size_t>(2) * n * h * w * 4;
    if (buf.size() != 9 + static_cast<std::size_t>(hlen) + expected)
        throw IoError("load_dataset: shape mismatch vs header (array block length must be " +
                      std::to_string(expected) + " bytes, found " +
                      std::to_string(buf.size() - 9 - hlen) + ")");

    auto read_block = [&](std::size_t offset, std::vector<Field>& out) {
        for (long long s = 0; s < n; ++s) {
            Field f(static_cast<int>(h), static_cast<int>(w));
            for (long long i = 0; i < h * w; ++i) {
                float v;
                std::memcpy(&v, buf.data() + offset, 4);
                offset += 4;
                f.values[i] = static_cast<double>(v);
            }
            out.push_back(std::move(f));
        }
        return offset;
    };
    std::vector<Field> as, us;
    const std::size_t a_off = 9 + hlen;
    read_block(a_off, as);
    read_block(a_off + static_cast<std::size_t>(n) * h * w * 4, us);
    for (long long s = 0; s < n; ++s)
        ds.samples.emplace_back(std::move(as[static_cast<std::size_t>(s)]),
                                std::move(us[static_cast<std::size_t>(s)]));
    return ds;
}

inline OperatorDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_dataset: cannot open '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_dataset(buf);
}

} // namespace mofs
