#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace dimwhatif;

namespace {

// Pinned curve-training run shared by the tests below.
const AutoencoderModel& curve_model() {
    static const AutoencoderModel m = [] {
        const auto ds = test_support::dataset_of(test_support::curve_5d(200));
        TrainOptions o;
        o.epochs = 500;
        o.batch = 16;
        o.learning_rate = 0.05;
        o.seed = 1;
        return train(*ds, {5, 8, 2, 8, 5}, o);
    }();
    return m;
}

// Big-endian idx blob.
std::string idx_blob(std::uint32_t magic, const std::vector<std::uint32_t>& dims, const std::vector<std::uint8_t>& data) {
    std::string out;
    auto put = [&](std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
    };
    put(magic);
    for (auto d : dims) put(d);
    for (auto b : data) out.push_back(static_cast<char>(b));
    return out;
}

}  // namespace

TEST(Architecture, Validation) {
    EXPECT_NO_THROW(validate_layer_sizes({5, 8, 2, 8, 5}));
    EXPECT_NO_THROW(validate_layer_sizes({3, 2, 3}));
    EXPECT_THROW(validate_layer_sizes({5, 8, 3, 8, 5}), Error);  // bottleneck
    EXPECT_THROW(validate_layer_sizes({5, 8, 2, 7, 5}), Error);  // asymmetric
    EXPECT_THROW(validate_layer_sizes({5, 2, 2, 5}), Error);     // even count
    EXPECT_THROW(validate_layer_sizes({2}), Error);
}

TEST(Train, LinearIdentityRepresentable) {
    Rng rng(2);
    Matrix x(40, 2);
    for (Eigen::Index r = 0; r < 40; ++r) x(r, 0) = rng.normal(), x(r, 1) = 0.5 * x(r, 0) + rng.normal();
    const auto ds = test_support::dataset_of(x);
    TrainOptions o;
    o.activation = Activation::linear;
    o.epochs = 2000;
    o.batch = 8;
    o.learning_rate = 0.05;
    const AutoencoderModel m = train(*ds, {2, 2, 2}, o);
    EXPECT_LT(m.report.final_error, 1e-6);
    EXPECT_LT(m.report.final_error, m.report.initial_error);
}

TEST(Train, CurveManifoldErrorBelowQuarterOfInitial) {
    const auto& m = curve_model();
    EXPECT_EQ(m.report.epochs, 500u);
    EXPECT_LT(m.report.final_error, 0.25 * m.report.initial_error);
    EXPECT_LT(m.report.final_error, 0.5 * m.report.initial_error);
}

TEST(Train, ZeroEpochsEqualsInitialization) {
    const auto ds = test_support::dataset_of(test_support::curve_5d(50));
    TrainOptions o;
    o.epochs = 0;
    o.seed = 9;
    const AutoencoderModel trained = train(*ds, {5, 8, 2, 8, 5}, o);
    const AutoencoderModel init = initialize_autoencoder(*ds, {5, 8, 2, 8, 5}, o);
    ASSERT_EQ(trained.layers.size(), init.layers.size());
    for (std::size_t l = 0; l < init.layers.size(); ++l) {
        EXPECT_EQ(trained.layers[l].weights, init.layers[l].weights);
        EXPECT_EQ(trained.layers[l].bias, init.layers[l].bias);
    }
    EXPECT_EQ(trained.report.final_error, trained.report.initial_error);
}

TEST(Train, DeterministicGivenSeed) {
    const auto ds = test_support::dataset_of(test_support::curve_5d(60));
    TrainOptions o;
    o.epochs = 30;
    const AutoencoderModel a = train(*ds, {5, 8, 2, 8, 5}, o);
    const AutoencoderModel b = train(*ds, {5, 8, 2, 8, 5}, o);
    for (std::size_t l = 0; l < a.layers.size(); ++l) EXPECT_EQ(a.layers[l].weights, b.layers[l].weights);
    o.seed = 2;
    const AutoencoderModel c = train(*ds, {5, 8, 2, 8, 5}, o);
    EXPECT_NE(a.layers[0].weights, c.layers[0].weights);
}

TEST(Train, DivergenceReportsEpoch) {
    const auto ds = test_support::dataset_of(test_support::curve_5d(40));
    TrainOptions o;
    o.learning_rate = 1e6;
    o.activation = Activation::linear;
    try {
        (void)train(*ds, {5, 8, 2, 8, 5}, o);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "training_diverged");
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    }
}

TEST(Train, RejectsBadHyperparameters) {
    const auto ds = test_support::dataset_of(test_support::curve_5d(10));
    TrainOptions o;
    o.batch = 11;
    EXPECT_THROW((void)train(*ds, {5, 8, 2, 8, 5}, o), Error);
    o.batch = 4;
    o.learning_rate = 0.0;
    EXPECT_THROW((void)train(*ds, {5, 8, 2, 8, 5}, o), Error);
    o.learning_rate = 0.1;
    EXPECT_THROW((void)train(*ds, {4, 2, 4}, o), Error);
}

TEST(EncodeDecode, PcaEquivalenceFixture) {
    for (bool standardize : {false, true}) {
        const auto ds = test_support::oecd();
        const PcaModel pca = fit_pca(*ds, standardize);
        const AutoencoderModel ae = linear_autoencoder(pca);
        Rng rng(13);
        for (std::size_t r = 0; r < ds->rows(); ++r) {
            const Vector x = ds->row(r);
            Vector dx(8);
            for (Eigen::Index i = 0; i < 8; ++i) dx(i) = rng.normal() * ds->stats(static_cast<std::size_t>(i)).std;
            const double w = 1.0 + project_all(pca, *ds).width;
            EXPECT_LE((encode(ae, x) - project(pca, x)).cwiseAbs().maxCoeff(), 1e-10 * w);
            EXPECT_LE(((encode(ae, x + dx) - encode(ae, x)) - forward_project(pca, dx)).cwiseAbs().maxCoeff(), 1e-10 * w);
            const Point2 y = encode(ae, x);
            const Point2 dy(rng.normal(), rng.normal());
            const Vector lift = decode(ae, y + dy) - decode(ae, y);
            const Vector expected = backward_unconstrained(pca, dy);
            EXPECT_LE((lift - expected).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + expected.cwiseAbs().maxCoeff()));
        }
    }
}

TEST(EncodeDecode, ReconstructionMatchesReportAndIsPure) {
    const auto& m = curve_model();
    const Matrix x = test_support::curve_5d(200);
    EXPECT_NEAR(reconstruction_error(m, x), m.report.final_error, 1e-15);
    // Per-row decode(encode(x)) agrees with the batch error.
    double sum = 0.0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const Vector back = decode(m, encode(m, x.row(r).transpose()));
        sum += ((back - x.row(r).transpose()).cwiseQuotient(m.input_half_range)).squaredNorm();
    }
    EXPECT_NEAR(sum / static_cast<double>(x.size()), m.report.final_error, 1e-12);
    const Vector probe = x.row(17).transpose();
    EXPECT_EQ(encode(m, probe), encode(m, probe));
    EXPECT_THROW((void)encode(m, Vector::Zero(4)), Error);
}

TEST(GradientCheck, LinearSingleHiddenLayer) {
    const AutoencoderModel m = make_autoencoder({4, 2, 4}, Activation::linear, 3);
    EXPECT_LT(gradient_check(m, 50), 1e-6);
}

TEST(GradientCheck, TanhNetwork) {
    EXPECT_LT(gradient_check(make_autoencoder({5, 8, 2, 8, 5}, Activation::tanh, 4), 100), 1e-4);
    EXPECT_LT(gradient_check(curve_model(), test_support::curve_5d(30), 100), 1e-4);
}

TEST(GradientCheck, ZeroNetworkZeroData) {
    AutoencoderModel m = make_autoencoder({3, 2, 3}, Activation::tanh, 1);
    for (auto& l : m.layers) l.weights.setZero(), l.bias.setZero();
    EXPECT_EQ(gradient_check(m, Matrix::Zero(4, 3), 20), 0.0);
    for (const auto& g : detail::loss_gradient(m, Matrix::Zero(3, 4))) {
        EXPECT_EQ(g.weights.cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(g.bias.cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(AutoencoderSession, DragIsDecodeShiftAndReportsReachGap) {
    const auto ds = test_support::dataset_of(test_support::curve_5d(200));
    const auto model = std::make_shared<const DrModel>(curve_model());
    Session s(ds, model);
    s.select(50);
    const Point2 target = s.position() + Point2(0.05, -0.02);
    const DragResult r = s.drag_point(target);
    const auto& ae = curve_model();
    EXPECT_EQ(s.working_point(), decode(ae, target));
    EXPECT_EQ(s.position(), encode(ae, decode(ae, target)));
    EXPECT_NEAR(r.reach_gap, (encode(ae, decode(ae, target)) - target).norm(), 1e-15);
}

TEST(AutoencoderSession, ConstraintViolationsAreReportedNotApplied) {
    const auto ds = test_support::dataset_of(test_support::curve_5d(200));
    Session s(ds, std::make_shared<const DrModel>(curve_model()));
    s.select(100);
    ConstraintSet cs(5);
    cs.lock(0);
    s.set_constraints(cs);
    const Vector before = s.working_point();
    const DragResult r = s.drag_point(s.position() + Point2(0.3, 0.3));
    EXPECT_FALSE(r.applied);
    EXPECT_EQ(r.violated, violated_features(cs, decode(curve_model(), r.requested), before));
    EXPECT_EQ(s.working_point(), before);
}

TEST(AutoencoderSession, SetFeatureMatchesEncode) {
    const auto ds = test_support::dataset_of(test_support::curve_5d(200));
    Session s(ds, std::make_shared<const DrModel>(curve_model()));
    s.select(10);
    s.set_feature(2, 0.5);
    EXPECT_EQ(s.position(), encode(curve_model(), s.working_point()));
}

TEST(AutoencoderSession, ProlinesAreCurved) {
    const auto ds = test_support::dataset_of(test_support::curve_5d(200));
    Session s(ds, std::make_shared<const DrModel>(curve_model()));
    s.select(100);
    double best = 0.0;
    for (const Proline& p : build_all_prolines(s)) {
        const Point2 a = p.samples.front().position, b = p.samples.back().position;
        const Point2 chord = b - a;
        double worst = 0.0;
        for (const auto& smp : p.samples) {
            const Point2 v = smp.position - a;
            const double cross = std::abs(chord.x() * v.y() - chord.y() * v.x());
            worst = std::max(worst, chord.norm() > 0 ? cross / chord.norm() : v.norm());
        }
        if (p.relevance > 0) best = std::max(best, worst / p.relevance);
    }
    EXPECT_GT(best, 1e-3);
}

TEST(AutoencoderSession, FeasibilityMapRuns) {
    const auto ds = test_support::dataset_of(test_support::curve_5d(200));
    Session s(ds, std::make_shared<const DrModel>(curve_model()));
    s.select(0);
    const FeasibilityMap m = compute_map(s, 5, 5);
    EXPECT_EQ(m.solver_calls, 25u);
    for (bool b : m.mask) EXPECT_TRUE(b);
}

TEST(AutoencoderJson, RoundTripPreservesEncoding) {
    const auto& m = curve_model();
    const AutoencoderModel back = autoencoder_from_json(nlohmann::json::parse(to_json(m).dump()));
    const Matrix x = test_support::curve_5d(20);
    EXPECT_EQ(encode_rows(back, x), encode_rows(m, x));
    EXPECT_EQ(back.report.history, m.report.history);
    const DrModel via_variant = model_from_json(to_json(DrModel(m)));
    EXPECT_FALSE(is_linear(via_variant));
}

TEST(IdxReader, ImagesAndLabels) {
    std::vector<std::uint8_t> pixels(3 * 2 * 2);
    for (std::size_t k = 0; k < pixels.size(); ++k) pixels[k] = static_cast<std::uint8_t>(k * 20);
    const Dataset ds = idx::read_images(idx_blob(0x803, {3, 2, 2}, pixels));
    EXPECT_EQ(ds.rows(), 3u);
    EXPECT_EQ(ds.cols(), 4u);
    EXPECT_EQ(ds.row_ids()[2], "img2");
    EXPECT_DOUBLE_EQ(ds.values()(1, 3), 140.0 / 255.0);
    EXPECT_EQ(idx::read_images(idx_blob(0x803, {3, 2, 2}, pixels), 2).rows(), 2u);
    EXPECT_THROW((void)idx::read_images(idx_blob(0x801, {3}, {1, 2, 3})), Error);
    EXPECT_THROW((void)idx::read_images(idx_blob(0x803, {3, 2, 2}, {1, 2})), Error);

    const auto labels = idx::read_labels(idx_blob(0x801, {3}, {7, 1, 4}));
    EXPECT_EQ(labels, (std::vector<std::uint8_t>{7, 1, 4}));
}
