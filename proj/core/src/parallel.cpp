#include "hjblab/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

#include "hjblab/error.hpp"

namespace hjblab {

namespace {
std::atomic<int> g_threads{0};
}

void set_thread_count(int n) {
    if (n < 0) throw InputError("thread count must be nonnegative");
    g_threads.store(n);
}

int thread_count() {
    const int n = g_threads.load();
    return n > 0 ? n : omp_get_max_threads();
}

int configure_threads_from_env() {
    if (const char* env = std::getenv("HJBLAB_THREADS"); env != nullptr && *env != '\0') {
        int n = 0;
        try {
            n = std::stoi(env);
        } catch (const std::exception&) {
            throw InputError(std::string("HJBLAB_THREADS is not an integer: ") + env);
        }
        set_thread_count(n);
    }
    return thread_count();
}

}  // namespace hjblab
