#include "liqlsmc/parallel.hpp"

#include <cstdlib>
#include <string>

namespace liqlsmc {

std::size_t default_thread_count() {
    if (const char* env = std::getenv("LIQLSMC_THREADS")) {
        try {
            const long long v = std::stoll(env);
            if (v >= 1) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

}  // namespace liqlsmc
