#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "cfica/angles.hpp"

using namespace cfica;

namespace {
const double kT1 = kPi / 4;
const double kT2 = 2 * kPi / 3;
}  // namespace

TEST_CASE("theta_to_mixing reproduces the polar form exactly") {
    MixingSpec spec = theta_to_mixing(AngleVector::of2(kT1, kT2));
    CHECK(spec.Theta(0, 0) == Catch::Approx(std::cos(kT1)).margin(0));
    CHECK(spec.Theta(1, 0) == Catch::Approx(std::sin(kT1)).margin(0));
    CHECK(spec.Theta(0, 1) == Catch::Approx(std::cos(kT2)).margin(0));
    CHECK(spec.Theta(1, 1) == Catch::Approx(std::sin(kT2)).margin(0));

    // Table-header values for theta0 = (pi/4, 2pi/3).
    CHECK(spec.Theta(0, 0) == Catch::Approx(0.71).margin(0.005));
    CHECK(spec.Theta(1, 0) == Catch::Approx(0.71).margin(0.005));
    CHECK(spec.Theta(0, 1) == Catch::Approx(-0.50).margin(0.005));
    CHECK(spec.Theta(1, 1) == Catch::Approx(0.87).margin(0.005));

    for (int j = 0; j < 2; ++j)
        CHECK(spec.Theta.col(j).norm() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("projectors match an independent matrix computation") {
    MixingSpec spec = theta_to_mixing(AngleVector::of2(kT1, kT2));
    Eigen::MatrixXd inv = spec.Theta.inverse();  // generic LU path as the oracle
    for (int j = 0; j < 2; ++j) {
        Eigen::MatrixXd P_oracle = spec.Theta.col(j) * inv.row(j);
        CHECK((spec.projectors[j] - P_oracle).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(spec.projectors[0](0, 0) == Catch::Approx(0.634).margin(5e-4));
    CHECK(spec.projectors[0](0, 1) == Catch::Approx(0.366).margin(5e-4));
    CHECK(spec.projectors[0](1, 0) == Catch::Approx(0.634).margin(5e-4));
    CHECK(spec.projectors[0].trace() == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("projector algebra holds across the parameter region") {
    for (double t1 = 0.2; t1 < kPi - 0.4; t1 += 0.37) {
        for (double t2 = t1 + 0.15; t2 < kPi - 0.05 && t2 - t1 < kPi - 0.15; t2 += 0.41) {
            MixingSpec spec = theta_to_mixing(AngleVector::of2(t1, t2));
            Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2, 2);
            for (int j = 0; j < 2; ++j) {
                const auto& P = spec.projectors[j];
                sum += P;
                CHECK((P * P - P).cwiseAbs().maxCoeff() < 1e-10);
                CHECK(P.trace() == Catch::Approx(1.0).margin(1e-10));
                Eigen::JacobiSVD<Eigen::MatrixXd> svd(P);
                CHECK(svd.singularValues()[1] < 1e-10);  // rank one
            }
            CHECK((spec.projectors[0] * spec.projectors[1]).cwiseAbs().maxCoeff() < 1e-10);
            CHECK((sum - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
            CHECK((spec.ThetaInv - spec.Theta.inverse()).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("round trip theta -> Theta -> theta") {
    for (double t1 = 0.15; t1 < kPi - 0.3; t1 += 0.23) {
        for (double t2 = t1 + 0.1; t2 < kPi - 0.02 && t2 - t1 < kPi - 0.1; t2 += 0.29) {
            AngleVector theta = AngleVector::of2(t1, t2);
            AngleVector back = mixing_to_theta(theta_to_mixing(theta).Theta);
            CHECK((back.angles - theta.angles).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("round trip for n = 3 hyperspherical blocks") {
    Eigen::MatrixXd M(3, 3);
    M << 0.9, -0.2, 0.1,
         0.3, 0.8, -0.4,
         0.2, 0.4, 0.95;
    AngleVector theta = mixing_to_theta(M);
    REQUIRE(theta.dim() == 6);
    MixingSpec spec = theta_to_mixing(theta);
    AngleVector back = mixing_to_theta(spec.Theta);
    CHECK((back.angles - theta.angles).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(3, 3);
    for (const auto& P : spec.projectors) {
        sum += P;
        CHECK((P * P - P).cwiseAbs().maxCoeff() < 1e-10);
    }
    CHECK((sum - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("epsilon invertibility is rejected with the offending pair") {
    try {
        theta_to_mixing(AngleVector::of2(1.0, 1.02));
        FAIL("expected DegenerateParametrizationError");
    } catch (const DegenerateParametrizationError& e) {
        CHECK(e.col_a == 0);
        CHECK(e.col_b == 1);
    }
    // Near-opposite columns are just as singular as near-equal ones.
    CHECK_THROWS_AS(theta_to_mixing(AngleVector::of2(0.03, kPi - 0.005)),
                    DegenerateParametrizationError);
    CHECK_THROWS_AS(theta_to_mixing(AngleVector(Eigen::VectorXd::Ones(3), 2)), ConfigError);
}

TEST_CASE("analytic projector jacobian matches central differences") {
    int checked = 0;
    for (double t1 = 0.3; t1 < 2.4 && checked < 25; t1 += 0.35) {
        for (double t2 = t1 + 0.3; t2 < kPi - 0.1; t2 += 0.45) {
            MixingSpec spec = theta_to_mixing(AngleVector::of2(t1, t2));
            ProjectorJacobian a = projector_jacobian(spec, JacobianMode::analytic);
            ProjectorJacobian n = projector_jacobian(spec, JacobianMode::numeric);
            for (int j = 0; j < 2; ++j) {
                double scale = a.d_vec_p[j].cwiseAbs().maxCoeff();
                CHECK((a.d_vec_p[j] - n.d_vec_p[j]).cwiseAbs().maxCoeff() < 1e-6 * scale);
            }
            ++checked;
        }
    }
    REQUIRE(checked >= 20);
}

TEST_CASE("jacobians of the two projectors are negatives") {
    MixingSpec spec = theta_to_mixing(AngleVector::of2(0.8, 2.1));
    ProjectorJacobian jac = projector_jacobian(spec);
    CHECK((jac.d_vec_p[0] + jac.d_vec_p[1]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("jacobian stays finite near degeneracy") {
    double t1 = kPi / 3;
    MixingSpec spec = theta_to_mixing(AngleVector::of2(t1, t1 + 0.01), 0.005);
    ProjectorJacobian jac = projector_jacobian(spec);
    double scale = jac.d_vec_p[0].cwiseAbs().maxCoeff();
    CHECK(std::isfinite(scale));
    double expected = std::sin(t1 + 0.01) * std::cos(t1 + 0.01) / std::pow(std::sin(0.01), 2);
    CHECK(jac.d_vec_p[0](0, 0) == Catch::Approx(expected).epsilon(1e-10));
    CHECK(scale > 1e3);
}

TEST_CASE("analytic jacobian rejects n != 2") {
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(3, 3);
    M(1, 0) = 0.4;
    MixingSpec spec = theta_to_mixing(mixing_to_theta(M));
    CHECK_THROWS_AS(projector_jacobian(spec, JacobianMode::analytic),
                    UnsupportedDimensionError);
    CHECK_NOTHROW(projector_jacobian(spec, JacobianMode::numeric));
}

TEST_CASE("align undoes column swaps and sign flips exactly") {
    MixingSpec ref = theta_to_mixing(AngleVector::of2(kT1, kT2));
    Eigen::MatrixXd scrambled(2, 2);
    scrambled.col(0) = -ref.Theta.col(1);
    scrambled.col(1) = ref.Theta.col(0);
    MixingSpec est = align(detail::mixing_from_matrix_unchecked(
                               mixing_to_theta(scrambled), scrambled),
                           ref);
    CHECK((est.Theta - ref.Theta).cwiseAbs().maxCoeff() == 0.0);

    MixingSpec self = align(ref, ref);
    CHECK((self.Theta - ref.Theta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("align never loses to the identity transformation") {
    std::mt19937_64 eng(91);
    std::uniform_real_distribution<double> u(0.1, kPi - 0.1);
    for (int rep = 0; rep < 50; ++rep) {
        double a1 = u(eng), a2 = u(eng), b1 = u(eng), b2 = u(eng);
        if (std::abs(a2 - a1) < 0.1 || std::abs(b2 - b1) < 0.1) continue;
        if (a1 > a2) std::swap(a1, a2);
        if (b1 > b2) std::swap(b1, b2);
        if (a2 - a1 > kPi - 0.1 || b2 - b1 > kPi - 0.1) continue;
        MixingSpec est = theta_to_mixing(AngleVector::of2(a1, a2));
        MixingSpec ref = theta_to_mixing(AngleVector::of2(b1, b2));
        MixingSpec aligned = align(est, ref);
        double aligned_dist = (aligned.Theta - ref.Theta).norm();
        CHECK(aligned_dist <= (est.Theta - ref.Theta).norm() + 1e-14);

        // Independent enumeration of all eight candidates.
        double brute = std::numeric_limits<double>::infinity();
        for (int swap = 0; swap < 2; ++swap)
            for (int s0 = -1; s0 <= 1; s0 += 2)
                for (int s1 = -1; s1 <= 1; s1 += 2) {
                    Eigen::MatrixXd cand(2, 2);
                    cand.col(0) = s0 * est.Theta.col(swap ? 1 : 0);
                    cand.col(1) = s1 * est.Theta.col(swap ? 0 : 1);
                    brute = std::min(brute, (cand - ref.Theta).norm());
                }
        CHECK(aligned_dist == Catch::Approx(brute).margin(1e-12));
    }
}
