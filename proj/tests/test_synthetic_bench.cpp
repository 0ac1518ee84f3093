#include "mmpd/artifact_io.hpp"
#include "mmpd/errors.hpp"
#include "mmpd/synthetic_bench.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

using namespace mmpd;
namespace fs = std::filesystem;

namespace {

double std_dev(const Eigen::VectorXd& v) { return std::sqrt((v.array() - v.mean()).square().mean()); }

Eigen::VectorXd relative_x(const SkeletonSequence& s, int joint_a, int joint_b) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(s.length()));
    for (Eigen::Index t = 0; t < out.size(); ++t) out(t) = s.x(t, joint_a) - s.x(t, joint_b);
    return out;
}

// Hann-windowed periodogram; entry k is the power at k * rate / N Hz.
std::vector<double> power_spectrum(const Eigen::VectorXd& signal) {
    const auto n = signal.size();
    const double mean = signal.mean();
    std::vector<double> power(static_cast<std::size_t>(n / 2 + 1));
    for (Eigen::Index k = 0; k <= n / 2; ++k) {
        std::complex<double> acc = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) {
            const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / (n - 1));
            acc += hann * (signal(t) - mean) * std::polar(1.0, -2.0 * std::numbers::pi * k * t / n);
        }
        power[static_cast<std::size_t>(k)] = std::norm(acc);
    }
    return power;
}

struct BandSummary {
    double peak_hz = 0.0;
    double band_peak = 0.0;  // max power in 4-6 Hz
    double median = 0.0;     // median power above 2.5 Hz
};

BandSummary wrist_band(const SkeletonSequence& s) {
    const auto power = power_spectrum(relative_x(s, joint::left_wrist, joint::left_shoulder));
    const double df = s.frame_rate / static_cast<double>(s.length());
    BandSummary b;
    double best = -1.0;
    std::vector<double> above;
    for (std::size_t k = 0; k < power.size(); ++k) {
        const double hz = static_cast<double>(k) * df;
        if (hz <= 2.5) continue;
        above.push_back(power[k]);
        if (power[k] > best) best = power[k], b.peak_hz = hz;
        if (hz >= 4.0 && hz <= 6.0) b.band_peak = std::max(b.band_peak, power[k]);
    }
    std::nth_element(above.begin(), above.begin() + static_cast<std::ptrdiff_t>(above.size() / 2), above.end());
    b.median = above[above.size() / 2];
    return b;
}

} // namespace

TEST_CASE("toy generator oracle inverts forward on its range") {
    const ToyGenerator g({64, {32, 32, 1}, 0.5, 3});
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const LatentVector c(testutil::random_matrix(64, 1, rng).col(0));
        const auto back = g.oracle_inverse(g.forward(c));
        CHECK((back.values() - c.values()).cwiseAbs().maxCoeff() <= 1e-8);
    }
    CHECK(g.latent_dim() == 64);
    CHECK(g.output_shape() == ImageShape{32, 32, 1});
}

TEST_CASE("toy generator is deterministic in the seed") {
    const ToyGenerator a({16, {8, 8, 1}, 0.5, 7});
    const ToyGenerator b({16, {8, 8, 1}, 0.5, 7});
    const ToyGenerator c({16, {8, 8, 1}, 0.5, 8});
    const LatentVector z(Eigen::VectorXd::LinSpaced(16, -1.0, 1.0));
    CHECK(a.forward(z).pixels() == a.forward(z).pixels());
    CHECK(a.forward(z).pixels() == b.forward(z).pixels());
    CHECK(a.forward(z).pixels() != c.forward(z).pixels());
    CHECK(a.weight() == b.weight());
}

TEST_CASE("toy generator weights have the configured scale") {
    const ToyGenerator g({64, {32, 32, 1}, 0.5, 1});
    const double var = g.weight().array().square().mean();
    CHECK(var == doctest::Approx(1.0 / 64.0).epsilon(0.05));
    const double bias_var = g.bias().array().square().mean();
    CHECK(bias_var == doctest::Approx(0.25).epsilon(0.15));
    const Eigen::VectorXd px = g.forward(LatentVector(Eigen::VectorXd::Constant(64, 50.0))).pixels();
    CHECK(px.minCoeff() >= 0.0);
    CHECK(px.maxCoeff() <= 1.0);
}

TEST_CASE("toy generator pullback matches central differences") {
    const ToyGenerator g({12, {6, 6, 1}, 0.5, 5});
    std::mt19937_64 rng(6);
    const Eigen::VectorXd c = testutil::random_matrix(12, 1, rng).col(0);
    const Eigen::VectorXd probe = testutil::random_matrix(36, 1, rng).col(0);
    const Eigen::VectorXd analytic = g.pullback(LatentVector(c), probe);
    Eigen::VectorXd numeric(12);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < 12; ++i) {
        Eigen::VectorXd up = c, down = c;
        up(i) += h;
        down(i) -= h;
        numeric(i) = (g.forward(LatentVector(up)).pixels().dot(probe) -
                      g.forward(LatentVector(down)).pixels().dot(probe)) / (2.0 * h);
    }
    CHECK(testutil::rel_error(analytic, numeric) <= 1e-6);
}

TEST_CASE("toy generator specs are validated") {
    CHECK_THROWS_AS(ToyGenerator({0, {4, 4, 1}, 0.5, 0}), ShapeError);
    CHECK_THROWS_AS(ToyGenerator({20, {4, 4, 1}, 0.5, 0}), ShapeError);
    CHECK_THROWS_AS(ToyGenerator({4, {4, 4, 1}, -1.0, 0}), DataError);
}

TEST_CASE("cluster sample means lie within four standard errors") {
    const std::size_t n = 1000;
    const double sigma = 0.5;
    Eigen::VectorXd mu_a(2), mu_b(2);
    mu_a << 1.0, -2.0;
    mu_b << 3.0, 0.5;
    int within = 0;
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
        const auto c = sample_latent_clusters(mu_a, mu_b, sigma, n, static_cast<std::uint64_t>(seed));
        REQUIRE(c.set.a.size() == n);
        REQUIRE(c.set.b.size() == n);
        Eigen::VectorXd ma = Eigen::VectorXd::Zero(2), mb = Eigen::VectorXd::Zero(2);
        for (const auto& x : c.set.a) ma += x.values();
        for (const auto& x : c.set.b) mb += x.values();
        ma /= n;
        mb /= n;
        const double bound = 4.0 * sigma / std::sqrt(static_cast<double>(n));
        within += ((ma - mu_a).norm() <= bound && (mb - mu_b).norm() <= bound);
    }
    CHECK(within == seeds);
}

TEST_CASE("cluster sampling is seeded and its oracle is the unit mean difference") {
    Eigen::VectorXd mu_a = Eigen::VectorXd::Zero(5), mu_b = Eigen::VectorXd::Zero(5);
    mu_b(1) = 3.0;
    mu_b(4) = -4.0;
    const auto a = sample_latent_clusters(mu_a, mu_b, 0.3, 10, 2);
    const auto b = sample_latent_clusters(mu_a, mu_b, 0.3, 10, 2);
    for (std::size_t i = 0; i < 10; ++i) CHECK(a.set.a[i].values() == b.set.a[i].values());
    CHECK(a.oracle.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((a.oracle - (mu_b - mu_a) / 5.0).norm() < 1e-12);
    CHECK_THROWS_AS(sample_latent_clusters(mu_a, mu_a, 0.3, 10, 2), DegenerateDirection);
    CHECK_THROWS_AS(sample_latent_clusters(mu_a, mu_b, 0.0, 10, 2), DataError);
    CHECK_THROWS_AS(sample_latent_clusters(mu_a, Eigen::VectorXd::Ones(3), 0.3, 10, 2), ShapeError);
}

TEST_CASE("parkinsonian ankle excursion is half the control excursion") {
    double pd = 0.0, ctrl = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto ps = GaitSimSpec::defaults(GaitClass::parkinsonian);
        auto cs = GaitSimSpec::defaults(GaitClass::control);
        ps.seed = cs.seed = seed;
        ps.frames = cs.frames = 300;
        const auto p = simulate_gait(ps);
        const auto c = simulate_gait(cs);
        pd += std_dev(relative_x(p, joint::left_ankle, joint::left_hip)) +
              std_dev(relative_x(p, joint::right_ankle, joint::right_hip));
        ctrl += std_dev(relative_x(c, joint::left_ankle, joint::left_hip)) +
                std_dev(relative_x(c, joint::right_ankle, joint::right_hip));
    }
    const double ratio = pd / ctrl;
    MESSAGE("ankle excursion ratio " << ratio);
    CHECK(ratio >= 0.45);
    CHECK(ratio <= 0.55);
}

TEST_CASE("parkinsonian wrist motion peaks at the tremor frequency") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto ps = GaitSimSpec::defaults(GaitClass::parkinsonian);
        auto cs = GaitSimSpec::defaults(GaitClass::control);
        ps.seed = cs.seed = seed;
        ps.frames = cs.frames = 300;
        const auto p = wrist_band(simulate_gait(ps));
        const auto c = wrist_band(simulate_gait(cs));
        CAPTURE(seed);
        CHECK(p.peak_hz >= 4.0);
        CHECK(p.peak_hz <= 6.0);
        CHECK(p.band_peak > 20.0 * p.median);
        CHECK(c.band_peak < 20.0 * c.median);
    }
}

TEST_CASE("gait simulation is deterministic and well formed") {
    auto spec = GaitSimSpec::defaults(GaitClass::parkinsonian);
    spec.seed = 9;
    spec.subject_id = "walker";
    const auto a = simulate_gait(spec);
    const auto b = simulate_gait(spec);
    CHECK(a.frames == b.frames);
    CHECK(a.subject_id == "walker");
    CHECK(a.length() == 96);
    CHECK_NOTHROW(a.validate());
    for (Eigen::Index t = 0; t < a.frames.rows(); ++t)
        for (int j = 0; j < kJointCount; ++j) CHECK(a.confidence(t, j) == 1.0);
    spec.seed = 10;
    CHECK(simulate_gait(spec).frames != a.frames);

    const auto d = GaitSimSpec::defaults(GaitClass::parkinsonian);
    CHECK(d.stride_scale == 0.5);
    CHECK(d.arm_swing_scale == 0.3);
    CHECK(d.tremor_hz == 5.0);
    CHECK(GaitSimSpec::defaults(GaitClass::control).tremor_amplitude == 0.0);
}

TEST_CASE("gait simulator specs are validated") {
    auto spec = GaitSimSpec::defaults(GaitClass::parkinsonian);
    spec.tremor_hz = 16.0;  // above Nyquist at 30 fps
    CHECK_THROWS_AS(simulate_gait(spec), DataError);
    spec = GaitSimSpec::defaults(GaitClass::control);
    spec.stride_scale = -1.0;
    CHECK_THROWS_AS(simulate_gait(spec), DataError);
    spec = GaitSimSpec::defaults(GaitClass::control);
    spec.frames = 0;
    CHECK_THROWS_AS(simulate_gait(spec), DataError);
    CHECK(parse_gait_class("parkinsonian") == GaitClass::parkinsonian);
    CHECK_THROWS_AS(parse_gait_class("limping"), ParseError);
}

TEST_CASE("benchmark subjects carry the configured structure") {
    BenchSpec spec;
    spec.pd_subjects = 5;
    spec.control_subjects = 4;
    spec.corpus_per_expression = 3;
    spec.seed = 2;
    const auto bench = make_bench(spec);
    REQUIRE(bench.subjects.size() == 9);
    std::size_t pd = 0;
    for (const auto& s : bench.subjects) {
        pd += s.label == Diagnosis::pd;
        CHECK(s.faces.size() == 7);
        CHECK(s.gait.length() == 96);
    }
    CHECK(pd == 5);
    CHECK(bench.subjects.front().id == "pd-000");
    CHECK(bench.corpus.size() == 21);
    CHECK(bench.oracle_directions.size() == 6);
    for (const auto& [e, dir] : bench.oracle_directions) {
        CHECK(dir.values.norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(dir.source == "neutral");
        CHECK(dir.target == to_string(e));
        CHECK((bench.expression_means.at(e).normalized() - dir.values).norm() < 1e-12);
        CHECK(bench.expression_means.at(e).norm() == doctest::Approx(spec.expression_scale).epsilon(1e-12));
    }
    CHECK(bench.expression_means.at(ExpressionLabel::neutral).isZero(0.0));

    const auto again = make_bench(spec);
    CHECK(again.subjects[3].gait.frames == bench.subjects[3].gait.frames);
    CHECK(again.subjects[3].faces[2].image.pixels() == bench.subjects[3].faces[2].image.pixels());

    spec.control_subjects = 0;
    CHECK_THROWS_AS(make_bench(spec), DataError);
}

TEST_CASE("PD faces move less along the expression directions than control faces") {
    BenchSpec spec;
    spec.pd_subjects = 20;
    spec.control_subjects = 20;
    spec.seed = 6;
    const auto bench = make_bench(spec);
    const auto g = bench.generator();
    double pd = 0.0, ctrl = 0.0;
    for (const auto& s : bench.subjects) {
        Eigen::VectorXd neutral;
        for (const auto& f : s.faces)
            if (f.label == ExpressionLabel::neutral) neutral = g.oracle_inverse(f.image).values();
        REQUIRE(neutral.size() == 64);
        double disp = 0.0;
        for (const auto& f : s.faces)
            if (f.label != ExpressionLabel::neutral)
                disp += (g.oracle_inverse(f.image).values() - neutral).dot(bench.oracle_directions.at(f.label).values);
        (s.label == Diagnosis::pd ? pd : ctrl) += disp / 6.0;
    }
    pd /= 20.0;
    ctrl /= 20.0;
    CHECK(pd == doctest::Approx(3.5 * 0.425).epsilon(0.1));
    CHECK(ctrl == doctest::Approx(3.5).epsilon(0.1));
}

TEST_CASE("writing a benchmark produces manifest, corpus, latents and oracle directions") {
    testutil::TempDir dir("bench-write");
    BenchSpec spec;
    spec.pd_subjects = 2;
    spec.control_subjects = 2;
    spec.corpus_per_expression = 2;
    spec.generator.latent_dim = 16;
    const auto bench = make_bench(spec);
    const auto paths = write_bench(bench, dir.path(), 0xabcULL);
    CHECK(fs::exists(paths.manifest));
    CHECK(fs::exists(paths.corpus));
    const auto manifest = load_manifest(paths.manifest);
    REQUIRE(manifest.subjects.size() == 4);
    for (const auto& s : manifest.subjects) {
        CHECK(fs::exists(s.gait));
        CHECK(s.faces.size() == 7);
        for (const auto& f : s.faces) CHECK(fs::exists(f.path));
    }
    const auto kp = load_keypoints(manifest.subjects[0].gait);
    CHECK(kp.frames == bench.subjects[0].gait.frames);
    CHECK(load_expression_corpus(paths.corpus).size() == 14);
    for (auto e : emotional_expressions()) {
        const auto name = std::string(to_string(e));
        CHECK(fs::exists(paths.latents_dir / (name + ".mmlv")));
        const auto dir_path = paths.oracle_dir / ("neutral_to_" + name + ".mmdv");
        REQUIRE(fs::exists(dir_path));
        const auto d = io::read_direction(dir_path);
        CHECK((d.values - bench.oracle_directions.at(e).values).norm() == 0.0);
    }
    CHECK(fs::exists(paths.latents_dir / "neutral.mmlv"));
    const auto lat = io::read_latents(paths.latents_dir / "neutral.mmlv");
    CHECK(lat.size() == bench.corpus_latents.at(ExpressionLabel::neutral).size());
}
