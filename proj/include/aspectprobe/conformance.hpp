// SPDX-License-Identifier: Apache-2.0
//
// Backend conformance checks, runnable against any Session (toy, or a remote
// bridge through wire::HttpSession).
#pragma once

#include <string>
#include <vector>

#include "aspectprobe/backend.hpp"

namespace aspectprobe {

struct ConformanceCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ConformanceReport {
    std::vector<ConformanceCheck> checks;
    bool ok() const;
};

struct ConformanceProbe {
    std::string text = "Он всегда читал книгу.";
    CharSpan target_span{10, 15};
    double tolerance = 1e-5;  // identity substitution vs baseline
};

// determinism, sorted truncation, hidden-state dimensions, identity substitution.
ConformanceReport check_conformance(const Session& session, const ConformanceProbe& probe = {});

}  // namespace aspectprobe
