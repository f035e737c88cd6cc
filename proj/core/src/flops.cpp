#include "vdc/flops.hpp"

namespace vdc {

namespace flops {

std::uint64_t conv2d(std::uint64_t kh, std::uint64_t kw, std::uint64_t c_in,
                     std::uint64_t c_out, std::uint64_t h, std::uint64_t w,
                     std::uint64_t t) {
    return 2 * kh * kw * c_in * c_out * h * w * t;
}

std::uint64_t conv1d_time(std::uint64_t kt, std::uint64_t c_in, std::uint64_t c_out,
                          std::uint64_t t, std::uint64_t h, std::uint64_t w) {
    return 2 * kt * c_in * c_out * t * h * w;
}

std::uint64_t linear(std::uint64_t positions, std::uint64_t c_in, std::uint64_t c_out) {
    return 2 * positions * c_in * c_out;
}

AttentionCost self_attention(std::uint64_t tokens, std::uint64_t c, std::uint64_t heads,
                             std::uint64_t sets) {
    AttentionCost cost;
    const std::uint64_t projections = 4 * linear(tokens, c, c);
    const std::uint64_t logits = 2 * tokens * tokens * c;
    const std::uint64_t mix = 2 * tokens * tokens * c;
    cost.flops = sets * (projections + logits + mix);
    cost.softmax_ops = sets * tokens * heads;
    return cost;
}

AttentionCost cross_attention_full(std::uint64_t tokens, std::uint64_t c_x,
                                   std::uint64_t c_ctx, std::uint64_t c_head,
                                   std::uint64_t c_out, std::uint64_t m,
                                   std::uint64_t heads) {
    AttentionCost cost;
    cost.flops = linear(tokens, c_x, c_head)        // query projection
                 + 2 * linear(m, c_ctx, c_head)     // key and value projections
                 + 2 * tokens * m * c_head          // logits
                 + 2 * tokens * m * c_head          // weighted value mix
                 + linear(tokens, c_head, c_out);   // output projection
    cost.softmax_ops = tokens * heads;
    return cost;
}

AttentionCost cross_attention_optimized(std::uint64_t c_ctx, std::uint64_t c_head,
                                        std::uint64_t c_out) {
    AttentionCost cost;
    cost.flops = linear(1, c_ctx, c_head) + linear(1, c_head, c_out);
    cost.softmax_ops = 0;
    return cost;
}

}  // namespace flops

std::uint64_t FlopsReport::total() const {
    std::uint64_t sum = 0;
    for (const BlockFlops& b : blocks) sum += b.total();
    return sum;
}

std::uint64_t FlopsReport::total_softmax_ops() const {
    std::uint64_t sum = 0;
    for (const BlockFlops& b : blocks) sum += b.softmax_ops;
    return sum;
}

const BlockFlops* FlopsReport::find(const std::string& name) const {
    for (const BlockFlops& b : blocks)
        if (b.name == name) return &b;
    return nullptr;
}

std::string FlopsReport::to_json() const {
    std::string out = "{\n  \"blocks\": [";
    bool first = true;
    for (const BlockFlops& b : blocks) {
        out += first ? "\n" : ",\n";
        out += "    {\"name\": \"" + b.name + "\", \"conv\": " + std::to_string(b.conv) +
               ", \"linear\": " + std::to_string(b.linear) +
               ", \"attention\": " + std::to_string(b.attention) +
               ", \"softmax_ops\": " + std::to_string(b.softmax_ops) +
               ", \"total\": " + std::to_string(b.total()) + "}";
        first = false;
    }
    out += first ? "]" : "\n  ]";
    out += ",\n  \"total\": " + std::to_string(total());
    out += ",\n  \"total_softmax_ops\": " + std::to_string(total_softmax_ops());
    out += "\n}\n";
    return out;
}

}  // namespace vdc
