#include "efta/fault.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "efta/half.hpp"

namespace efta {

namespace {
const char* kSiteNames[FAULT_SITE_COUNT] = {
    "GEMM1_OUT", "SUB_MAX", "EXP_OUT", "REDUCE_MAX",
    "REDUCE_SUM", "RESCALE_FACTOR", "GEMM2_ACC", "NORMALIZE_OUT",
};
}

const char* fault_site_name(FaultSite s) { return kSiteNames[static_cast<int>(s)]; }

std::optional<FaultSite> fault_site_from_name(const std::string& name) {
    for (int i = 0; i < FAULT_SITE_COUNT; ++i)
        if (name == kSiteNames[i]) return static_cast<FaultSite>(i);
    return std::nullopt;
}

float flip_bit(float v, int width, int bit) {
    if (width == 32) {
        if (bit < 0 || bit > 31) throw std::invalid_argument("flip_bit: bit out of range");
        return std::bit_cast<float>(std::bit_cast<uint32_t>(v) ^ (1u << bit));
    }
    if (width == 16) {
        if (bit < 0 || bit > 15) throw std::invalid_argument("flip_bit: bit out of range");
        return half_bits_to_float(static_cast<uint16_t>(float_to_half_bits(v) ^ (1u << bit)));
    }
    throw std::invalid_argument("flip_bit: width must be 16 or 32");
}

std::string FaultSpec::to_string() const {
    std::ostringstream os;
    os << fault_site_name(site) << ':' << block_i << ':' << block_j << ':' << row << ':' << col
       << ':' << bit;
    if (trigger != 1) os << ':' << trigger;
    return os.str();
}

FaultSpec FaultSpec::parse(const std::string& text) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : text) {
        if (ch == ':') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    parts.push_back(cur);
    if (parts.size() != 6 && parts.size() != 7)
        throw ConfigError("fault spec: expected SITE:i:j:row:col:bit[:trigger], got '" + text + "'");
    FaultSpec f;
    const auto site = fault_site_from_name(parts[0]);
    if (!site) throw ConfigError("fault spec: unknown site '" + parts[0] + "'");
    f.site = *site;
    try {
        f.block_i = std::stoi(parts[1]);
        f.block_j = std::stoi(parts[2]);
        f.row = std::stoi(parts[3]);
        f.col = std::stoi(parts[4]);
        f.bit = std::stoi(parts[5]);
        f.trigger = parts.size() == 7 ? std::stoi(parts[6]) : 1;
    } catch (const std::exception&) {
        throw ConfigError("fault spec: bad integer field in '" + text + "'");
    }
    return f;
}

namespace {

// column-coordinate bound per site (0 means the site is per-row)
int site_col_bound(FaultSite s, const AttnConfig& cfg) {
    switch (s) {
        case FaultSite::GEMM1_OUT:
        case FaultSite::SUB_MAX:
        case FaultSite::EXP_OUT:
            return cfg.block;
        case FaultSite::REDUCE_MAX:
        case FaultSite::REDUCE_SUM:
            return 1;
        case FaultSite::RESCALE_FACTOR:
        case FaultSite::GEMM2_ACC:
        case FaultSite::NORMALIZE_OUT:
            return cfg.head_dim;
    }
    return 0;
}

}  // namespace

void FaultPlan::validate(const AttnConfig& cfg) const {
    const int n = cfg.num_blocks();
    std::vector<int> per_row_block(n, 0);
    for (const FaultSpec& f : specs) {
        if (f.block_i < 0 || f.block_i >= n)
            throw ConfigError("fault plan: block_i out of range");
        const bool post_loop = f.site == FaultSite::NORMALIZE_OUT;
        if (f.block_j < 0 || f.block_j >= (post_loop ? 1 : n))
            throw ConfigError("fault plan: block_j out of range");
        if (f.row < 0 || f.row >= cfg.block)
            throw ConfigError("fault plan: row out of range");
        if (f.col < 0 || f.col >= site_col_bound(f.site, cfg))
            throw ConfigError("fault plan: col out of range for site");
        if (f.bit < 0 || f.bit > 31)
            throw ConfigError("fault plan: bit out of range");
        if (f.trigger < 1)
            throw ConfigError("fault plan: trigger must be >= 1");
        if (++per_row_block[f.block_i] > 1)
            throw ConfigError("fault plan: multiple faults in one detection cycle (row-block " +
                              std::to_string(f.block_i) + ")");
    }
}

FaultPlan FaultPlan::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("fault plan: cannot open '" + path + "'");
    FaultPlan plan;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto last = line.find_last_not_of(" \t\r");
        plan.specs.push_back(FaultSpec::parse(line.substr(first, last - first + 1)));
    }
    return plan;
}

void FaultPlan::to_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("fault plan: cannot write '" + path + "'");
    for (const FaultSpec& f : specs) out << f.to_string() << '\n';
}

FaultPlan sample_random_plan(const AttnConfig& cfg, const std::vector<FaultSite>& sites, Rng& rng,
                             bool decoupled_layout) {
    if (sites.empty()) throw ConfigError("sample_random_plan: empty site list");
    FaultSpec f;
    f.site = sites[rng.below(static_cast<uint32_t>(sites.size()))];
    const int n = cfg.num_blocks();
    f.block_i = static_cast<int>(rng.below(n));
    bool pin_j = f.site == FaultSite::NORMALIZE_OUT;
    if (decoupled_layout &&
        (f.site == FaultSite::REDUCE_MAX || f.site == FaultSite::REDUCE_SUM ||
         f.site == FaultSite::GEMM2_ACC))
        pin_j = true;
    f.block_j = pin_j ? 0 : static_cast<int>(rng.below(n));
    f.row = static_cast<int>(rng.below(cfg.block));
    f.col = static_cast<int>(rng.below(site_col_bound(f.site, cfg)));
    f.bit = static_cast<int>(rng.below(32));
    f.trigger = 1;
    FaultPlan plan;
    plan.specs.push_back(f);
    plan.validate(cfg);
    return plan;
}

}  // namespace efta
