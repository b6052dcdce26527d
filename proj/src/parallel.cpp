#include "gctrl/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef GCTRL_HAVE_OPENMP
#include <omp.h>
#endif

namespace gctrl {

int worker_threads() {
    if (const char* env = std::getenv("GCTRL_THREADS"); env != nullptr && *env != '\0') {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
            // fall through to auto
        }
    }
#ifdef GCTRL_HAVE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace gctrl
