#pragma once

#include <Eigen/Dense>
#include <random>

#include "cfica/angles.hpp"
#include "cfica/ecf.hpp"

namespace testutil {

inline cfica::SensorPanel mixed_panel(const cfica::MixingSpec& spec, int T,
                                      std::uint64_t seed, char dist = 'u',
                                      double scale = 1.0) {
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::student_t_distribution<double> t3(3.0);
    const int n = spec.n();
    Eigen::MatrixXd eps(T, n);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < n; ++j)
            eps(t, j) = scale * (dist == 'u' ? uni(eng) : (dist == 'g' ? gauss(eng) : t3(eng)));
    return cfica::SensorPanel(eps * spec.Theta.transpose());
}

inline cfica::MixingSpec spec_pi4_2pi3() {
    return cfica::theta_to_mixing(cfica::AngleVector::of2(cfica::kPi / 4, 2 * cfica::kPi / 3));
}

}  // namespace testutil
