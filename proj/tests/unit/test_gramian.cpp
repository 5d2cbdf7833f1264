#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "pmuplace/errors.hpp"

using namespace pmuplace;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct LinearSystem {
    MatrixXd a;
    MatrixXd c;
};

LinearSystem random_stable(std::uint64_t seed, Index n, Index p)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    MatrixXd m(n, n), s(n, n), c(p, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            m(i, j) = nd(rng);
            s(i, j) = nd(rng);
        }
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < n; ++j)
            c(i, j) = nd(rng);
    // Skew part plus a negative definite part keeps every eigenvalue in the
    // open left half plane.
    const MatrixXd a = 0.5 * (s - s.transpose()) - (0.25 * m * m.transpose() + 0.5 * MatrixXd::Identity(n, n));
    return {a, c};
}

MatrixXd linear_empirical(const LinearSystem& sys, const GramianConfig& cfg)
{
    const VectorField f = [&](const VectorXd& x) { return VectorXd(sys.a * x); };
    const OutputMap h = [&](const VectorXd& x) { return VectorXd(sys.c * x); };
    return empirical_gramian(f, h, VectorXd::Zero(sys.a.rows()), cfg);
}

double logdet_of(const GramianBank& bank, std::vector<int> ids)
{
    return logdet(bank.sum(ids));
}

} // namespace

TEST_CASE("scalar decay recovers the analytic Gramian")
{
    GramianConfig cfg;
    cfg.dt = 1.0 / 120.0;
    cfg.horizon = 10.0;
    const LinearSystem sys{MatrixXd::Constant(1, 1, -1.0), MatrixXd::Ones(1, 1)};
    const MatrixXd w = linear_empirical(sys, cfg);
    CHECK(w(0, 0) == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("linear oracle")
{
    SUBCASE("scalar integral")
    {
        const MatrixXd w = linear_gramian_oracle(MatrixXd::Constant(1, 1, -1.0), MatrixXd::Ones(1, 1), 30.0, 0.01);
        CHECK(w(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
    }
    SUBCASE("zero output matrix")
    {
        const LinearSystem sys = random_stable(1, 3, 1);
        const MatrixXd w = linear_gramian_oracle(sys.a, MatrixXd::Zero(1, 3), 5.0, 0.01);
        CHECK(w.norm() == 0.0);
    }
    SUBCASE("dimension mismatch")
    {
        CHECK_THROWS_AS(linear_gramian_oracle(MatrixXd::Identity(2, 2), MatrixXd::Ones(1, 3), 1.0, 0.1),
                        ValidationError);
    }
}

TEST_CASE("seeded 4-state linear system matches the oracle within 1%")
{
    // The left Riemann sum is first-order accurate: halving dt halves the
    // gap, and dt = 1/240 keeps it under 1% for these systems.
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const LinearSystem sys = random_stable(seed, 4, 2);
        auto gap = [&](double dt) {
            GramianConfig cfg;
            cfg.dt = dt;
            const MatrixXd ref = linear_gramian_oracle(sys.a, sys.c, cfg.horizon, dt / 4.0);
            return fixtures::rel_frobenius(linear_empirical(sys, cfg), ref);
        };
        const double coarse = gap(1.0 / 120.0);
        const double fine = gap(1.0 / 240.0);
        CHECK(fine < 0.01);
        CHECK(coarse / fine == doctest::Approx(2.0).epsilon(0.1));
    }
}

TEST_CASE("perturbation size does not change a linear Gramian")
{
    const LinearSystem sys = random_stable(5, 4, 2);
    GramianConfig small;
    small.sizes = {0.25};
    GramianConfig large;
    large.sizes = {1.0};
    CHECK(fixtures::rel_frobenius(linear_empirical(sys, small), linear_empirical(sys, large)) < 1e-10);
}

TEST_CASE("swapping the two directions is bit-identical")
{
    const ReducedModel& m = fixtures::wscc_model(ModelKind::m1);
    const std::vector<int> ids{1, 3};
    GramianConfig swapped;
    swapped.directions = {-MatrixXd::Identity(6, 6), MatrixXd::Identity(6, 6)};
    const Gramian a = empirical_gramian(m, ids, GramianConfig{});
    const Gramian b = empirical_gramian(m, ids, swapped);
    CHECK(a.matrix == b.matrix);
}

TEST_CASE("thread count does not change the result")
{
    const ReducedModel& m = fixtures::wscc_model(ModelKind::m2);
    GramianConfig threaded;
    threaded.threads = 4;
    const GramianBank a = per_generator_bank(m, GramianConfig{});
    const GramianBank b = per_generator_bank(m, threaded);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(a.per_generator[i] == b.per_generator[i]);
}

TEST_CASE("bank dimensions and additivity")
{
    const std::vector<std::vector<int>> sets{{1, 2, 3}, {2, 3}, {1, 3}};
    for (ModelKind kind : {ModelKind::m1, ModelKind::m2}) {
        const ReducedModel& m = fixtures::wscc_model(kind);
        const GramianBank& bank = fixtures::wscc_bank(kind);
        REQUIRE(bank.size() == 3);
        CHECK(bank.state_dim() == m.state_dim());
        for (const auto& s : sets) {
            const Gramian joint = empirical_gramian(m, s, GramianConfig{});
            CHECK(fixtures::rel_frobenius(bank.sum(s), joint.matrix) <= 1e-8);
        }
    }
}

TEST_CASE("computed Gramians are symmetric and positive semidefinite")
{
    for (ModelKind kind : {ModelKind::m1, ModelKind::m2}) {
        for (const MatrixXd& w : fixtures::wscc_bank(kind).per_generator) {
            CHECK_NOTHROW(check_symmetric(w));
            const EigenRange r = min_max_eigenvalue(w);
            CHECK(r.min >= -1e-8 * r.max);
        }
    }
}

TEST_CASE("adding a generator never lowers the log-determinant")
{
    for (ModelKind kind : {ModelKind::m1, ModelKind::m2}) {
        const GramianBank& bank = fixtures::wscc_bank(kind);
        const std::vector<std::vector<int>> chains{{1}, {2}, {3}, {1, 2}, {1, 3}, {2, 3}};
        for (const auto& s : chains)
            for (int extra = 1; extra <= 3; ++extra) {
                if (std::find(s.begin(), s.end(), extra) != s.end())
                    continue;
                std::vector<int> bigger = s;
                bigger.push_back(extra);
                CHECK(logdet_of(bank, bigger) >= logdet_of(bank, s) - 1e-9);
            }
    }
}

TEST_CASE("WSCC classical Gramians follow the reference ordering")
{
    const GramianBank& bank = fixtures::wscc_bank(ModelKind::m1);
    CHECK(logdet_of(bank, {3}) > logdet_of(bank, {1}));
    // Reference values: 8.54, 19.61, 22.33, 21.34, 24.40, 26.47.
    CHECK(logdet_of(bank, {2, 3}) == doctest::Approx(26.47).epsilon(0.2));
    CHECK(logdet_of(bank, {1}) == doctest::Approx(8.54).epsilon(0.2));
    const EigenRange r = min_max_eigenvalue(bank.sum(std::vector<int>{1}));
    CHECK(r.max == doctest::Approx(1.14e3).epsilon(0.2));
    CHECK(r.min > 0.0082 / 3.0);
    CHECK(r.min < 0.0082 * 3.0);
}

TEST_CASE("empty instrumented set is rejected")
{
    CHECK_THROWS_AS(empirical_gramian(fixtures::wscc_model(ModelKind::m1), std::vector<int>{}, GramianConfig{}),
                    ValidationError);
}

TEST_CASE("logdet and eigenvalue extremes")
{
    CHECK(logdet(MatrixXd::Identity(6, 6)) == doctest::Approx(0.0));
    const MatrixXd d = VectorXd((VectorXd(2) << 2.0, 3.0).finished()).asDiagonal();
    CHECK(logdet(d) == doctest::Approx(std::log(6.0)));
    CHECK(logdet(MatrixXd::Zero(3, 3)) == -std::numeric_limits<double>::infinity());
    MatrixXd indefinite = MatrixXd::Identity(2, 2);
    indefinite(1, 1) = -1.0;
    CHECK(logdet(indefinite) == -std::numeric_limits<double>::infinity());
    MatrixXd asym = MatrixXd::Identity(2, 2);
    asym(0, 1) = 0.5;
    CHECK_THROWS_AS(logdet(asym), ValidationError);

    const EigenRange id = min_max_eigenvalue(MatrixXd::Identity(4, 4));
    CHECK(id.min == doctest::Approx(1.0));
    CHECK(id.max == doctest::Approx(1.0));
    const MatrixXd wide = VectorXd((VectorXd(2) << 0.0082, 1140.0).finished()).asDiagonal();
    const EigenRange r = min_max_eigenvalue(wide);
    CHECK(r.min == doctest::Approx(0.0082));
    CHECK(r.max == doctest::Approx(1140.0));
}

TEST_CASE("diverging perturbation is reported with its indices")
{
    const VectorField f = [](const VectorXd& x) { return VectorXd(x.array().square()); };
    const OutputMap h = [](const VectorXd& x) { return x; };
    GramianConfig cfg;
    cfg.horizon = 20.0;
    CHECK_THROWS_WITH_AS(empirical_gramian(f, h, VectorXd::Zero(1), cfg), doctest::Contains("direction 1, size"),
                         NumericalError);
}

TEST_CASE("configuration validation")
{
    GramianConfig cfg;
    CHECK_NOTHROW(cfg.validate(3));
    SUBCASE("non-orthogonal direction")
    {
        cfg.directions = {2.0 * MatrixXd::Identity(3, 3)};
        CHECK_THROWS_AS(cfg.validate(3), ValidationError);
    }
    SUBCASE("wrong direction size")
    {
        cfg.directions = {MatrixXd::Identity(2, 2)};
        CHECK_THROWS_AS(cfg.validate(3), ValidationError);
    }
    SUBCASE("non-positive size")
    {
        cfg.sizes = {0.5, 0.0};
        CHECK_THROWS_AS(cfg.validate(3), ValidationError);
    }
    SUBCASE("non-positive horizon")
    {
        cfg.horizon = 0.0;
        CHECK_THROWS_AS(cfg.validate(3), ValidationError);
    }
    SUBCASE("rotation is accepted")
    {
        MatrixXd rot(2, 2);
        rot << std::cos(0.3), -std::sin(0.3), std::sin(0.3), std::cos(0.3);
        cfg.directions = {rot, -rot};
        CHECK_NOTHROW(cfg.validate(2));
    }
    SUBCASE("fingerprint tracks the settings")
    {
        GramianConfig other;
        other.dt = 1.0 / 60.0;
        CHECK(other.fingerprint() != cfg.fingerprint());
        GramianConfig threaded;
        threaded.threads = 8;
        CHECK(threaded.fingerprint() == cfg.fingerprint());
    }
}

TEST_CASE("report carries the observability measures")
{
    const MatrixXd w = fixtures::wscc_bank(ModelKind::m1).sum(std::vector<int>{2, 3});
    const nlohmann::json j = gramian_report(w, "abc");
    CHECK(j["n"] == 6);
    REQUIRE(j["matrix"].size() == 6);
    CHECK(j["matrix"][1][2].get<double>() == w(1, 2));
    CHECK(j["logdet"].get<double>() == doctest::Approx(logdet(w)));
    CHECK(j["config_fingerprint"] == "abc");
    CHECK(j.contains("sigma_min"));
    CHECK(j.contains("sigma_max"));
}
