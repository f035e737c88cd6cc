#include "vdc/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace vdc {

namespace {

constexpr unsigned char kMagic[4] = {0x4D, 0x56, 0x44, 0x54};  // "MVDT"

void put_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xFF));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xFF));
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xFF));
}

void put_f64_le(std::vector<unsigned char>& out, double d) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

double get_f64_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void write_mvdt(const Tensor& t, const std::filesystem::path& path) {
    std::vector<unsigned char> buf;
    buf.reserve(8 + 4 * t.rank() + 8 * t.size());
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_u32_le(buf, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u32_le(buf, static_cast<std::uint32_t>(e));
    for (double v : t.data()) put_f64_le(buf, v);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

Tensor read_mvdt(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw IoError("not an MVDT file: " + path.string());
    }
    const std::uint32_t rank = get_u32_le(buf.data() + 4);
    std::size_t offset = 8;
    if (buf.size() < offset + 4ull * rank) throw IoError("truncated MVDT header: " + path.string());
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        shape[i] = get_u32_le(buf.data() + offset);
        offset += 4;
        count *= shape[i];
    }
    if (buf.size() != offset + 8ull * count) {
        throw IoError("MVDT payload size mismatch: " + path.string());
    }
    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i) data[i] = get_f64_le(buf.data() + offset + 8 * i);
    return Tensor(std::move(shape), std::move(data));
}

std::string tensor_to_json(const Tensor& t) {
    nlohmann::json j;
    j["shape"] = t.shape();
    j["data"] = std::vector<double>(t.data().begin(), t.data().end());
    return j.dump();
}

Tensor tensor_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.contains("shape") || !j.contains("data")) {
        throw IoError("malformed tensor JSON");
    }
    return Tensor(j["shape"].get<std::vector<std::size_t>>(),
                  j["data"].get<std::vector<double>>());
}

}  // namespace vdc
