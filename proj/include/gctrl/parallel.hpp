#pragma once

namespace gctrl {

// Worker count for internal parallel loops: GCTRL_THREADS if set and
// positive, otherwise the OpenMP default (1 when built without OpenMP).
[[nodiscard]] int worker_threads();

}  // namespace gctrl
