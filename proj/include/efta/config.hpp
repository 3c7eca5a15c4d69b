#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace efta {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Attention shape plus blocking/checksum geometry.
// Invariants enforced on construction: block | seq_len, stride | block,
// stride | head_dim.
struct AttnConfig {
    int seq_len = 64;
    int head_dim = 64;
    int block = 16;
    int stride = 8;
    int heads = 1;
    float scale = 0.0f;  // 0 -> default 1/sqrt(head_dim)

    AttnConfig() = default;
    AttnConfig(int n, int d, int b, int s = 8, int h = 1, float sc = 0.0f)
        : seq_len(n), head_dim(d), block(b), stride(s), heads(h), scale(sc) {
        validate();
    }

    void validate() {
        if (seq_len <= 0 || head_dim <= 0 || block <= 0 || stride <= 0 || heads <= 0)
            throw ConfigError("config: dimensions must be positive");
        if (seq_len % block != 0)
            throw ConfigError("config: block must divide seq_len (" +
                              std::to_string(block) + " vs " + std::to_string(seq_len) + ")");
        if (block % stride != 0)
            throw ConfigError("config: stride must divide block");
        if (head_dim % stride != 0)
            throw ConfigError("config: stride must divide head_dim");
        if (scale == 0.0f) scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
    }

    int num_blocks() const { return seq_len / block; }

    // checksum groups covering a protected tile of the given width
    int groups(int width) const { return width / stride; }

    // highest group index (groups are weighted 1..groups)
    int last_group(int width) const { return width / stride - 1; }
};

}  // namespace efta
