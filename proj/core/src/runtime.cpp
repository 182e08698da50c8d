#include <Eigen/Core>

#include <thread>

#include "softperc/common.hpp"

namespace softperc {

int set_thread_count(int threads) {
    if (threads <= 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        threads = hw == 0 ? 1 : int(hw);
    }
    Eigen::setNbThreads(threads);
    return Eigen::nbThreads();
}

}  // namespace softperc
