#pragma once

#include "posl/core.hpp"
#include "posl/error.hpp"

#include <doctest.h>

#include <vector>

namespace posl::test {

/// Outcome-only record with consecutive times starting at `first`.
inline PanelRecord series(SubjectId id, std::vector<double> y, Time first = 1, Time entry = 0) {
    PanelRecord r;
    r.subject_id = id;
    r.entry_time = entry;
    for (std::size_t i = 0; i < y.size(); ++i) {
        r.times.push_back(first + static_cast<Time>(i));
        r.covariates.emplace_back();
        r.outcomes.push_back(y[i]);
    }
    return r;
}

/// Code of the posl::Error thrown by `fn`; fails the test when nothing is thrown.
template <typename F>
ErrorCode code_of(F&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::InvalidArgument;
}

}  // namespace posl::test
