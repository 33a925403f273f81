#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dimwhatif/cli.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dimwhatif;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
    json out_json() const { return json::parse(out); }
    json err_json() const { return json::parse(err); }
};

Outcome run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

// Per-test scratch directory with a fitted OECD PCA model at model.json.
class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("dimwhatif_cli_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        csv_ = test_support::data_path("oecd_like.csv");
        const Outcome fit = run({"fit", csv_, "--out", path("model.json")});
        ASSERT_EQ(fit.code, 0) << fit.err;
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    // Service with the same dataset, a PCA session s1, and `row` selected.
    std::unique_ptr<Service> service_at(std::size_t row) {
        auto s = std::make_unique<Service>();
        EXPECT_EQ(s->handle({"POST", "/v1/datasets", {}, test_support::read_file(csv_), 0}).status, 201);
        EXPECT_EQ(s->handle({"POST", "/v1/sessions", {}, R"({"dataset_id":"d1"})", 0}).status, 201);
        EXPECT_EQ(s->handle({"POST", "/v1/sessions/s1/select", {}, json{{"row", row}}.dump(), 0}).status, 200);
        return s;
    }

    fs::path dir_;
    std::string csv_;
};

json without(json j, std::initializer_list<const char*> keys) {
    for (const char* k : keys) j.erase(k);
    return j;
}

}  // namespace

TEST_F(CliTest, FitWritesOrthonormalModelAndLayout) {
    const Outcome r = run({"fit", csv_, "--out", path("m2.json"), "--layout", path("l.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out_json()["n"], 34);
    const ModelBundle b = bundle_from_json(json::parse(test_support::read_file(path("m2.json"))));
    const auto e = oracle::to_mat(std::get<PcaModel>(*b.model).components);
    double g00 = 0, g01 = 0, g11 = 0;
    for (const auto& row : e) {
        g00 += row[0] * row[0];
        g01 += row[0] * row[1];
        g11 += row[1] * row[1];
    }
    EXPECT_NEAR(g00, 1.0, 1e-10);
    EXPECT_NEAR(g01, 0.0, 1e-10);
    EXPECT_NEAR(g11, 1.0, 1e-10);
    EXPECT_LE(r.out_json()["orthonormality_error"].get<double>(), 1e-10);

    const Dataset layout = load_csv(test_support::read_file(path("l.csv")));
    const Layout want = project_all(std::get<PcaModel>(*b.model), *b.dataset);
    ASSERT_EQ(layout.rows(), 34u);
    for (std::size_t i = 0; i < 34; ++i) {
        EXPECT_EQ(layout.row(i), want.position(i));
        EXPECT_EQ(layout.row_ids()[i], b.dataset->row_ids()[i]);
    }
}

TEST_F(CliTest, DefaultLayoutPathNextToModel) {
    EXPECT_TRUE(fs::exists(path("model.layout.csv")));
}

TEST_F(CliTest, AutoencoderZeroEpochsEqualsInitialization) {
    const Outcome r = run({"fit", csv_, "--backend", "ae", "--epochs", "0", "--layers", "8,4,2,4,8", "--seed", "3",
                           "--out", path("ae.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    const ModelBundle b = bundle_from_json(json::parse(test_support::read_file(path("ae.json"))));
    TrainOptions opts;
    opts.seed = 3;
    const AutoencoderModel init = initialize_autoencoder(*test_support::oecd(), {8, 4, 2, 4, 8}, opts);
    EXPECT_EQ(to_json(*b.model), to_json(DrModel(init)));
}

TEST_F(CliTest, MissingInputIsDataError) {
    const Outcome r = run({"fit", path("absent.csv"), "--out", path("x.json")});
    EXPECT_EQ(r.code, 3);
    EXPECT_EQ(r.err_json()["error"]["code"], "io_error");
    EXPECT_TRUE(r.out.empty());
}

TEST_F(CliTest, UsageErrorsExitTwo) {
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({"bp", path("model.json"), "0"}).code, 2);
    const Outcome r = run({"fit", csv_, "--out", path("x.json"), "--backend", "tsne"});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(r.err_json()["error"]["code"], "usage");
    EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, ContractViolationsExitThree) {
    EXPECT_EQ(run({"fp", path("model.json"), "Atlantis", "0=1"}).code, 3);
    EXPECT_EQ(run({"fp", path("model.json"), "0", "NoSuchFeature=1"}).code, 3);
    EXPECT_EQ(run({"bp", path("model.json"), "0", "--to", "1"}).code, 3);
    EXPECT_EQ(run({"bp", path("model.json"), "0", "--to", "0,0", "--bound", "0:5:1"}).code, 3);
    const Outcome bad_model = run({"bp", csv_, "0", "--to", "0,0"});
    EXPECT_EQ(bad_model.code, 3);
    EXPECT_EQ(bad_model.err_json()["error"]["code"], "invalid_json");
}

TEST_F(CliTest, BpToCurrentPositionIsZeroChange) {
    const Outcome fp = run({"fp", path("model.json"), "3", "0=" + json(test_support::oecd()->values()(3, 0)).dump()});
    const json pos = fp.out_json()["original_position"];
    const Outcome r = run({"bp", path("model.json"), "3", "--to", pos[0].dump() + "," + pos[1].dump()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const auto& v : r.out_json()["delta_x"]) EXPECT_EQ(v.get<double>(), 0.0);
}

TEST_F(CliTest, BpLockAllStaysAtOriginal) {
    for (const char* to : {"0,0", "1e4,-30", "-5,5"}) {
        const Outcome r = run({"bp", path("model.json"), "Australia", "--to", to, "--lock-all"});
        ASSERT_EQ(r.code, 0) << r.err;
        const json j = r.out_json();
        EXPECT_EQ(j["achieved"], j["original_position"]);
        for (const auto& v : j["delta_x"]) EXPECT_EQ(v.get<double>(), 0.0);
    }
}

TEST_F(CliTest, BpUnconstrainedMatchesClosedForm) {
    const PcaModel m = fit_pca(*test_support::oecd());
    const auto e = oracle::to_mat(m.components);
    const Point2 from = project_all(m, *test_support::oecd()).position(7);
    const Point2 target = from + Point2(1234.5, -6.25);
    std::ostringstream to;
    to.precision(17);
    to << target.x() << "," << target.y();
    const Outcome r = run({"bp", path("model.json"), "7", "--to", to.str()});
    ASSERT_EQ(r.code, 0) << r.err;
    const Point2 dy = target - from;
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_NEAR(r.out_json()["delta_x"][i].get<double>(), e[i][0] * dy.x() + e[i][1] * dy.y(), 1e-9);
    }
}

TEST_F(CliTest, FpMatchesServiceForward) {
    const Outcome r = run({"fp", path("model.json"), "5", "LifeExpectancy=80.5"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto keep = service_at(5);
    Service& s = *keep;
    const Response want =
        s.handle({"POST", "/v1/sessions/s1/forward", {}, R"({"feature":"LifeExpectancy","value":80.5})", 0});
    EXPECT_EQ(without(r.out_json(), {"row", "row_id", "original_position"}), want.body);
}

TEST_F(CliTest, BpMatchesServiceDrag) {
    const Outcome r = run({"bp", path("model.json"), "5", "--to", "100,-20", "--lock", "LifeExpectancy", "--bound",
                           "EmploymentRate:50:"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto keep = service_at(5);
    Service& s = *keep;
    const json cs = json::array({{{"feature", "LifeExpectancy"}, {"locked", true}},
                                 {{"feature", "EmploymentRate"}, {"lower", 50.0}}});
    ASSERT_EQ(s.handle({"PUT", "/v1/sessions/s1/constraints", {}, cs.dump(), 0}).status, 200);
    const Response want = s.handle({"POST", "/v1/sessions/s1/drag", {}, R"({"target":[100,-20]})", 0});
    EXPECT_EQ(without(r.out_json(), {"row", "row_id", "original_position"}), without(want.body, {"sequence", "stale"}));
}

TEST_F(CliTest, ProlinesMatchService) {
    const Outcome r = run({"prolines", path("model.json"), "9", "--top", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out_json().size(), 3u);
    const auto keep = service_at(9);
    Service& s = *keep;
    EXPECT_EQ(r.out_json(), s.handle({"GET", "/v1/sessions/s1/prolines", {{"top", "3"}}, "", 0}).body);
}

TEST_F(CliTest, FmapMatchesServiceAndWritesPgm) {
    const Outcome r = run({"fmap", path("model.json"), "2", "--res", "6,4", "--bound", "HouseholdIncome::25000",
                           "--pgm", path("mask.pgm")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto keep = service_at(2);
    Service& s = *keep;
    const json cs = json::array({{{"feature", "HouseholdIncome"}, {"upper", 25000.0}}});
    ASSERT_EQ(s.handle({"PUT", "/v1/sessions/s1/constraints", {}, cs.dump(), 0}).status, 200);
    EXPECT_EQ(r.out_json(), s.handle({"GET", "/v1/sessions/s1/feasibility_map", {{"nx", "6"}, {"ny", "4"}}, "", 0}).body);
    const std::string pgm = test_support::read_file(path("mask.pgm"));
    EXPECT_EQ(pgm, s.handle({"GET", "/v1/sessions/s1/feasibility_map", {{"nx", "6"}, {"ny", "4"}, {"format", "pgm"}}, "", 0})
                       .serialized());
    EXPECT_EQ(pgm.rfind("P2\n6 4\n255\n", 0), 0u);
}

TEST_F(CliTest, BenchWritesReportCsv) {
    const json cfg{{"sample_counts", {30}},     {"dimension_counts", {3}}, {"fixed_dimensions", 3}, {"fixed_samples", 30},
                   {"iterations", 1},          {"points_per_iteration", 2}, {"features_per_point", 1}, {"bp_directions", 2},
                   {"neighborhood", 4},        {"map_resolution", 2},      {"map_trials", 1}};
    std::ofstream(path("sweep.json")) << cfg.dump();
    const Outcome r = run({"bench", "--sweep", path("sweep.json"), "--json", path("report.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "axis,axis_value,delta,op,mean_cn,sd_cn,mean_time_us,sd_time_us,trials");
    EXPECT_TRUE(json::parse(test_support::read_file(path("report.json"))).contains("rows"));
}

TEST_F(CliTest, JsonConfigSuppliesFlags) {
    std::ofstream(path("cfg.json")) << R"({"bp": {"to": "0,0", "lock-all": true}})";
    const Outcome r = run({"--config", path("cfg.json"), "bp", path("model.json"), "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out_json()["achieved"], r.out_json()["original_position"]);
    const Outcome flags = run({"bp", path("model.json"), "1", "--to", "0,0", "--lock-all"});
    EXPECT_EQ(r.out, flags.out);
}

TEST_F(CliTest, RepeatedRunsAreByteIdentical) {
    const std::vector<std::vector<std::string>> script{
        {"fp", path("model.json"), "4", "0=30", "StudentSkills=500"},
        {"bp", path("model.json"), "4", "--to", "-1000,5", "--bound", "0:40:60"},
        {"prolines", path("model.json"), "4"},
        {"fmap", path("model.json"), "4", "--res", "5"},
    };
    for (const auto& args : script) {
        const Outcome a = run(args), b = run(args);
        EXPECT_EQ(a.code, 0) << a.err;
        EXPECT_EQ(a.out, b.out);
    }
}

TEST_F(CliTest, ReplayPrintsServiceResponses) {
    std::ostringstream log;
    ServiceOptions o;
    o.request_log = &log;
    Service s(o);
    s.handle({"POST", "/v1/datasets", {}, test_support::read_file(csv_), 0});
    s.handle({"POST", "/v1/sessions", {}, R"({"dataset_id":"d1"})", 0});
    s.handle({"POST", "/v1/sessions/s1/select", {}, R"({"row":0})", 0});
    s.handle({"POST", "/v1/sessions/s1/drag", {}, R"({"target":[1,2]})", 0});
    std::ofstream(path("log.jsonl")) << log.str();
    const Outcome r = run({"replay", path("log.jsonl")});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(log.str());
    std::string want;
    for (const auto& line : replay_log(in)) want += line + "\n";
    EXPECT_EQ(r.out, want);
}
