#include "vdc/report.hpp"

#include <bit>
#include <cstdio>
#include <vector>

namespace vdc {

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

std::uint64_t tensor_digest(const Tensor& t) {
    std::uint64_t h = fnv1a64(t.shape().data(), t.shape().size() * sizeof(std::size_t));
    // Hash the little-endian byte image of the payload, matching the MVDT format.
    std::vector<unsigned char> bytes;
    bytes.reserve(8 * t.size());
    for (double v : t.data()) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i)
            bytes.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFF));
    }
    return h ^ fnv1a64(bytes.data(), bytes.size());
}

std::string digest_hex(std::uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
    return std::string(buf);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

namespace {

void append_escaped(std::string& out, const std::string& s) {
    out += '"';
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    out += '"';
}

}  // namespace

std::string Report::to_json() const {
    std::string out = "{\n";
    out += "  \"command\": ";
    append_escaped(out, command);
    out += ",\n  \"inputs_digest\": ";
    append_escaped(out, inputs_digest);

    out += ",\n  \"counters\": {";
    bool first = true;
    for (const auto& [key, value] : counters) {
        out += first ? "\n    " : ",\n    ";
        append_escaped(out, key);
        out += ": " + std::to_string(value);
        first = false;
    }
    out += first ? "}" : "\n  }";

    out += ",\n  \"metrics\": {";
    first = true;
    for (const auto& [key, value] : metrics) {
        out += first ? "\n    " : ",\n    ";
        append_escaped(out, key);
        out += ": " + format_double(value);
        first = false;
    }
    out += first ? "}" : "\n  }";

    out += ",\n  \"notes\": {";
    first = true;
    for (const auto& [key, value] : notes) {
        out += first ? "\n    " : ",\n    ";
        append_escaped(out, key);
        out += ": ";
        append_escaped(out, value);
        first = false;
    }
    out += first ? "}" : "\n  }";

    out += "\n}\n";
    return out;
}

}  // namespace vdc
