#pragma once

#include <string>
#include <vector>

#include "ekc/core.hpp"

namespace ekc {

enum class ObsStatus { GOOD, BAD, OUTSIDE };

inline std::string to_string(ObsStatus s) {
    switch (s) {
        case ObsStatus::GOOD: return "GOOD";
        case ObsStatus::BAD: return "BAD";
        case ObsStatus::OUTSIDE: return "OUTSIDE";
    }
    return "BAD";
}

inline ObsStatus obs_status_from_string(const std::string& s) {
    if (s == "GOOD") return ObsStatus::GOOD;
    if (s == "BAD") return ObsStatus::BAD;
    if (s == "OUTSIDE") return ObsStatus::OUTSIDE;
    throw error("unknown observation status \"" + s + "\"");
}

// One measurement (or superobservation) in the uniform internal form.
struct Observation {
    int id = -1;
    std::string type;
    std::string product;
    std::string instrument;
    int batch = 0;
    double lon = 0, lat = 0, depth = 0;
    double fi = 0, fj = 0, fk = 0;
    double value = 0;
    double std = 0;
    double time = 0;
    ObsStatus status = ObsStatus::GOOD;

    // In-memory only, not persisted: recomputed where needed.
    int slot = 0;
    int n_merged = 1;
    std::vector<int> merged_ids;  // filled by superobing, for --describe-superob
};

using ObsTable = std::vector<Observation>;

}  // namespace ekc
