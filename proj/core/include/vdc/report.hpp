#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "vdc/tensor.hpp"

namespace vdc {

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t tensor_digest(const Tensor& t);
std::string digest_hex(std::uint64_t digest);

/// Format a double with 17 significant digits so it round-trips exactly.
std::string format_double(double v);

/// Deterministic command report: flat key/value maps serialized with sorted
/// keys so identical (config, seed) runs produce byte-identical files.
/// Wall time is deliberately not part of the serialized form.
struct Report {
    std::string command;
    std::string inputs_digest;
    std::map<std::string, double> metrics;
    std::map<std::string, std::uint64_t> counters;
    std::map<std::string, std::string> notes;

    std::string to_json() const;
};

}  // namespace vdc
