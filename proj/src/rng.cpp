#include "rlrds/rng.hpp"

#include <cmath>

namespace rlrds {

double Rng::exponential() {
    // 1 - u lies in (0, 1], so the log is finite.
    return -std::log1p(-uniform());
}

int Rng::uniform_int(int n) {
    std::uniform_int_distribution<int> dist(0, n - 1);
    return dist(engine_);
}

}  // namespace rlrds
