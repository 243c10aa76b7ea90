#include <cmath>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "pla/evaluation.hpp"
#include "pla/plots.hpp"
#include "pla/rng.hpp"

using namespace pla;
using namespace pla::eval;

namespace {

// Oracle metrics, written independently: long double accumulators, explicit
// squaring, no shared helpers with the library.
long double o_mae(const std::vector<double>& p, const std::vector<double>& a) {
    long double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs((long double)p[i] - a[i]);
    return s / p.size();
}

long double o_r2(const std::vector<double>& p, const std::vector<double>& a) {
    long double m = 0;
    for (double v : a) m += v;
    m /= a.size();
    long double res = 0, tot = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        res += ((long double)a[i] - p[i]) * ((long double)a[i] - p[i]);
        tot += ((long double)a[i] - m) * ((long double)a[i] - m);
    }
    return 1.0L - res / tot;
}

long double o_ade(const std::vector<Point2>& p, const std::vector<Point2>& a) {
    long double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const long double dx = (long double)p[i][0] - a[i][0];
        const long double dy = (long double)p[i][1] - a[i][1];
        s += std::sqrt(dx * dx + dy * dy);
    }
    return s / p.size();
}

long double o_fde(const std::vector<Point2>& p, const std::vector<Point2>& a) {
    const long double dx = (long double)p.back()[0] - a.back()[0];
    const long double dy = (long double)p.back()[1] - a.back()[1];
    return std::sqrt(dx * dx + dy * dy);
}

bool close_rel(double got, long double want, double rel = 1e-9) {
    const long double scale = std::max<long double>(1.0L, std::fabs(want));
    return std::fabs((long double)got - want) <= rel * scale;
}

}  // namespace

TEST_CASE("mae matches hand-computed cases", "[evaluation]") {
    CHECK(mae({1, 2, 3, 4}, {1, 2, 3, 7}) == Catch::Approx(0.75).margin(1e-12));
    CHECK(mae({5}, {5}) == 0.0);
    CHECK(mae({-1, 1}, {1, -1}) == Catch::Approx(2.0).margin(1e-12));
    CHECK_THROWS_AS(mae({1, 2}, {1}), LengthMismatch);
    CHECK_THROWS_AS(mae({}, {}), EmptyInput);
    CHECK_THROWS_AS(mae({std::nan("")}, {1}), DegenerateInput);
}

TEST_CASE("r2 matches hand-computed cases", "[evaluation]") {
    CHECK(r2({1, 2, 3}, {1, 2, 3}) == 1.0);
    CHECK(r2({1, 2, 3}, {1, 2, 2}) == Catch::Approx(-0.5).margin(1e-12));
    // predicting the mean everywhere scores exactly zero
    CHECK(r2({2, 2, 2}, {1, 2, 3}) == Catch::Approx(0.0).margin(1e-12));
    CHECK_THROWS_AS(r2({1, 2}, {3, 3}), DegenerateGroundTruth);
    CHECK_THROWS_AS(r2({1}, {3}), DegenerateGroundTruth);  // single sample has no variance
    CHECK_THROWS_AS(r2({1, 2}, {1}), LengthMismatch);
    CHECK_THROWS_AS(r2({}, {}), EmptyInput);
}

TEST_CASE("ade and fde match hand-computed cases", "[evaluation]") {
    const std::vector<Point2> p{{1, 0}, {2, 0}};
    const std::vector<Point2> a{{1, 0.1}, {2, 1.0}};
    CHECK(ade(p, a) == Catch::Approx(0.55).margin(1e-12));
    CHECK(fde(p, a) == Catch::Approx(1.0).margin(1e-12));

    // a single 3-4-5 style displacement
    CHECK(ade({{0.3, 0.4}}, {{0, 0}}) == Catch::Approx(0.5).margin(1e-12));
    CHECK(fde({{0.3, 0.4}}, {{0, 0}}) == Catch::Approx(0.5).margin(1e-12));

    const std::vector<Point2> none;
    CHECK_THROWS_AS(ade({{0, 0}}, none), LengthMismatch);
    CHECK_THROWS_AS(ade(none, none), EmptyInput);
    CHECK_THROWS_AS(fde(none, none), EmptyInput);
}

TEST_CASE("metrics agree with independent oracles on random data", "[evaluation]") {
    SplitMix64 rng(0x0bac1e5u);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(499);
        std::vector<double> p(n), a(n);
        std::vector<Point2> tp(n), ta(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = rng.uniform(-30, 30);
            a[i] = rng.uniform(-30, 30);
            tp[i] = {rng.uniform(-50, 50), rng.uniform(-50, 50)};
            ta[i] = {rng.uniform(-50, 50), rng.uniform(-50, 50)};
        }
        CHECK(close_rel(mae(p, a), o_mae(p, a)));
        CHECK(close_rel(r2(p, a), o_r2(p, a)));
        CHECK(close_rel(ade(tp, ta), o_ade(tp, ta)));
        CHECK(close_rel(fde(tp, ta), o_fde(tp, ta)));
    }
}

TEST_CASE("metric symmetries and scaling", "[evaluation]") {
    SplitMix64 rng(0x5ca1eu);
    std::vector<double> p(40), a(40);
    std::vector<Point2> tp(40), ta(40), tps, tas;
    for (std::size_t i = 0; i < 40; ++i) {
        p[i] = rng.uniform(-10, 10);
        a[i] = rng.uniform(-10, 10);
        tp[i] = {rng.uniform(-10, 10), rng.uniform(-10, 10)};
        ta[i] = {rng.uniform(-10, 10), rng.uniform(-10, 10)};
        tps.push_back({tp[i][0] + 13.5, tp[i][1] - 4.25});
        tas.push_back({ta[i][0] + 13.5, ta[i][1] - 4.25});
    }
    CHECK(mae(p, a) == Catch::Approx(mae(a, p)).margin(1e-12));

    std::vector<double> p2(p), a2(a);
    for (auto& v : p2) v *= 2;
    for (auto& v : a2) v *= 2;
    CHECK(mae(p2, a2) == Catch::Approx(2.0 * mae(p, a)).epsilon(1e-12));

    // displacement metrics ignore a common rigid translation
    CHECK(ade(tps, tas) == Catch::Approx(ade(tp, ta)).epsilon(1e-9));
    CHECK(fde(tps, tas) == Catch::Approx(fde(tp, ta)).epsilon(1e-9));
}

TEST_CASE("evaluate_run aggregates per-frame records", "[evaluation]") {
    std::vector<FrameRecord> records;
    records.push_back({"f0", {{1, 0}, {2, 0}}, {{1, 0.1}, {2, 1.0}}, 5.0, 5.5, 0.0, 1.0});
    records.push_back({"f1", {{1, 0}, {2, 0}}, {{1, 0}, {2, 0}}, 6.0, 6.0, 2.0, 2.0});
    records.push_back({"f2", {{0, 0}, {0, 1}}, {{0, 0}, {0, 0}}, 7.0, 6.5, -3.0, -2.0});

    const auto report = evaluate_run(records);
    REQUIRE(report.frames.size() == 3);
    CHECK(report.frames[0].frame_id == "f0");
    CHECK(report.frames[0].ade_m == Catch::Approx(0.55).margin(1e-12));
    CHECK(report.frames[0].fde_m == Catch::Approx(1.0).margin(1e-12));
    CHECK(report.frames[2].fde_m == Catch::Approx(1.0).margin(1e-12));
    CHECK(report.speed_mae == Catch::Approx((0.5 + 0.0 + 0.5) / 3).margin(1e-12));
    CHECK(report.steering_mae_deg == Catch::Approx((1.0 + 0.0 + 1.0) / 3).margin(1e-12));
    CHECK(report.ade_m == Catch::Approx((0.55 + 0.0 + 0.5) / 3).margin(1e-12));
    CHECK(report.fde_m == Catch::Approx((1.0 + 0.0 + 1.0) / 3).margin(1e-12));
    // gt [5.5, 6, 6.5] about mean 6: SS_tot = 0.5; residuals 0.5 each end: SS_res = 0.5
    CHECK(report.speed_r2 == Catch::Approx(0.0).margin(1e-12));

    CHECK_THROWS_AS(evaluate_run({}), EmptyInput);

    std::vector<FrameRecord> mismatched = records;
    mismatched[1].ground_truth_xy.pop_back();
    CHECK_THROWS_AS(evaluate_run(mismatched), LengthMismatch);
}

TEST_CASE("report serializes to stable JSON and CSV", "[evaluation]") {
    std::vector<FrameRecord> records;
    records.push_back({"f0", {{1, 0}}, {{1, 1}}, 5.0, 5.5, 0.0, 1.0});
    records.push_back({"f1", {{2, 0}}, {{2, 0}}, 6.0, 6.25, 2.0, 2.0});
    auto report = evaluate_run(records);
    report.backend = "rule";
    report.config_hash = "deadbeef";
    report.generated_at_unix_ms = 1234;

    const auto j = report_to_json(report);
    CHECK(j.at("version") == "pla-report/1");
    CHECK(j.at("frame_count") == 2);
    CHECK(j.at("backend") == "rule");
    CHECK(j.at("frames").size() == 2);
    CHECK(j.at("frames")[0].at("frame_id") == "f0");
    CHECK(j.at("errors").is_array());
    CHECK(report_to_json(report).dump(2) == j.dump(2));  // deterministic bytes

    const std::string csv = frames_csv(report);
    const std::string expected =
        "frame_id,speed_pred,speed_gt,steer_pred,steer_gt,ade,fde\n"
        "f0,5.000000,5.500000,0.000000,1.000000,1.000000,1.000000\n"
        "f1,6.000000,6.250000,2.000000,2.000000,0.000000,0.000000\n";
    CHECK(csv == expected);
}

TEST_CASE("scatter plot carries every sample and the identity line", "[evaluation]") {
    std::vector<double> gt{1.0, 2.0, 3.5, 4.25, 6.0};
    const auto svg = plots::emit_scatter(gt, gt, "speed [m/s]");  // perfect predictions

    // count markers
    std::size_t markers = 0;
    for (std::size_t pos = svg.find("class=\"pt\""); pos != std::string::npos;
         pos = svg.find("class=\"pt\"", pos + 1))
        ++markers;
    CHECK(markers == gt.size());

    // pull the reference line
    const auto line_pos = svg.find("class=\"refline\"");
    REQUIRE(line_pos != std::string::npos);
    auto attr = [&](const char* name, std::size_t from) {
        const auto p = svg.find(std::string(name) + "=\"", from);
        REQUIRE(p != std::string::npos);
        return std::stod(svg.substr(p + std::string(name).size() + 2));
    };
    const double x1 = attr("x1", line_pos), y1 = attr("y1", line_pos);
    const double x2 = attr("x2", line_pos), y2 = attr("y2", line_pos);

    // with pred == gt every marker center sits on the diagonal segment
    for (std::size_t pos = svg.find("class=\"pt\""); pos != std::string::npos;
         pos = svg.find("class=\"pt\"", pos + 1)) {
        const double cx = attr("cx", pos), cy = attr("cy", pos);
        const double len = std::hypot(x2 - x1, y2 - y1);
        const double dist = std::fabs((x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)) / len;
        CHECK(dist < 0.05);
        CHECK(cx >= std::min(x1, x2));
        CHECK(cx <= std::max(x1, x2));
    }

    CHECK(svg.find("speed [m/s] (ground truth)") != std::string::npos);
    CHECK(svg.find("speed [m/s] (predicted)") != std::string::npos);
    CHECK(plots::emit_scatter(gt, gt, "speed [m/s]") == svg);  // deterministic

    CHECK_THROWS_AS(plots::emit_scatter({1, 2}, {1}, "x"), LengthMismatch);
    CHECK_THROWS_AS(plots::emit_scatter({}, {}, "x"), EmptyInput);
    // constant data still renders (domain widened instead of dividing by zero)
    CHECK(plots::emit_scatter({2, 2}, {2, 2}, "x").find("circle") != std::string::npos);
}

TEST_CASE("heatmap colors segments by the endpoint mean", "[evaluation]") {
    CHECK(plots::heat_color(0.0) == "#204080");
    CHECK(plots::heat_color(1.0) == "#e06040");
    CHECK(plots::heat_color(0.5) == "#805060");

    // one segment, endpoint values 0 and 1: mean 0.5 -> exact midpoint color
    const std::vector<Point2> path{{0, 0}, {10, 0}};
    const auto svg = plots::emit_heatmap(path, {0.0, 1.0}, "ade [m]");
    CHECK(svg.find("stroke=\"#805060\"") != std::string::npos);
    CHECK(svg.find("ade [m]") != std::string::npos);

    // constant values pin every segment to the low end of the ramp
    const std::vector<Point2> longer{{0, 0}, {5, 0}, {10, 1}, {15, 3}};
    const auto flat = plots::emit_heatmap(longer, {2.0, 2.0, 2.0, 2.0}, "fde [m]");
    std::size_t segments = 0;
    for (std::size_t pos = flat.find("class=\"seg\""); pos != std::string::npos;
         pos = flat.find("class=\"seg\"", pos + 1))
        ++segments;
    CHECK(segments == longer.size() - 1);
    std::size_t low_strokes = 0;
    for (std::size_t pos = flat.find("stroke=\"#204080\""); pos != std::string::npos;
         pos = flat.find("stroke=\"#204080\"", pos + 1))
        ++low_strokes;
    CHECK(low_strokes == segments);

    CHECK(plots::emit_heatmap(longer, {2, 2, 2, 2}, "fde [m]") == flat);  // deterministic
    CHECK_THROWS_AS(plots::emit_heatmap(path, {1.0}, "x"), LengthMismatch);
    CHECK_THROWS_AS(plots::emit_heatmap({{0, 0}}, {1.0}, "x"), EmptyInput);
}
