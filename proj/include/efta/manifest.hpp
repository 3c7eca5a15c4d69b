#pragma once

#include <cstdint>
#include <string>

#include "efta/config.hpp"
#include "efta/efta.hpp"

namespace efta {

// Every option of a command-line run, serializable so a run can be
// reproduced exactly from its manifest file.
struct RunManifest {
    int seq_len = 64;
    int head_dim = 64;
    int block = 16;
    int stride = 8;
    int heads = 1;
    std::string mode = "efta-opt";  // none | efta | efta-opt | decoupled

    int trials = 100;
    uint64_t seed = 1;

    int calibrate = 200;  // clean calibration runs (0: use defaults/overrides)
    double safety = 2.0;
    double eps1 = -1.0;  // explicit threshold overrides; negative = unset
    double eps2 = -1.0;
    double eps_lin = -1.0;

    // none | random | random:SITE[,SITE...] | inline spec SITE:i:j:row:col:bit[:trigger]
    std::string inject = "none";

    int sweep = 0;  // observation trials for the threshold sweep (0: skip)

    std::string out_dir = "efta_out";
    std::string format = "both";  // csv | json | both
    int jobs = 1;

    AttnConfig config() const;
    FTMode ft_mode() const;  // throws ConfigError on an unknown name

    std::string to_json_string() const;
    static RunManifest from_json_string(const std::string& text);
    void save(const std::string& path) const;
    static RunManifest load(const std::string& path);

    bool operator==(const RunManifest& o) const;
};

// Parse command-line arguments into a manifest. --manifest FILE loads every
// option from the file; other flags given alongside override it.
// Throws ConfigError on invalid input. Sets `exit_early` (with `exit_code`)
// for --help.
RunManifest parse_args(int argc, const char* const* argv, bool& exit_early, int& exit_code);

}  // namespace efta
