#include "odsc/grad_check.hpp"
#include "odsc/model.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <map>

using namespace odsc;
using namespace odsc::test;

namespace {

NetworkSpec orl_dsc_spec() {
    NetworkSpec s;
    s.variant = Variant::DscU;
    s.in_h = 32;
    s.in_w = 32;
    s.n_samples = 400;
    s.enc_u = {{5, 5}, {3, 3}, {3, 3}};
    s.dec = {{3, 3}, {3, 5}, {5, 1}};
    return s;
}

NetworkSpec orl_odsc_spec() {
    NetworkSpec s;
    s.variant = Variant::Odsc;
    s.fusion = Fusion::Add;
    s.in_h = 32;
    s.in_w = 32;
    s.n_samples = 400;
    s.enc_u = {{3, 3}, {3, 3}, {3, 3}};
    s.enc_o = {{3, 3}, {3, 3}};
    s.dec = {{3, 3}, {3, 3}, {3, 1, /*bias_on_input=*/true}};
    return s;
}

NetworkSpec mnist_odsc_spec() {
    NetworkSpec s;
    s.variant = Variant::Odsc;
    s.fusion = Fusion::Concat;
    s.in_h = 28;
    s.in_w = 28;
    s.n_samples = 1000;
    s.enc_u = {{5, 20}, {3, 10}, {3, 5}};
    s.enc_o = {{5, 20}, {3, 10}};
    s.dec = {{3, 5}, {3, 10}, {5, 1}};
    return s;
}

std::map<std::string, Eigen::Index> rows_by_name(const ParamCounts& pc) {
    std::map<std::string, Eigen::Index> m;
    for (const auto& r : pc.rows) m[r.name] = r.params;
    return m;
}

} // namespace

TEST_CASE("parameter counts: ORL undercomplete network, cell for cell") {
    ParamCounts pc = param_count(orl_dsc_spec());
    auto m = rows_by_name(pc);
    CHECK(m["enc-u-1"] == 130);
    CHECK(m["enc-u-2"] == 138);
    CHECK(m["enc-u-3"] == 84);
    CHECK(m["self-expressive"] == 160000);
    CHECK(m["dec-1"] == 84);
    CHECK(m["dec-2"] == 140);
    CHECK(m["dec-3"] == 126);
    CHECK(pc.total == 160702);
}

TEST_CASE("parameter counts: ORL dual-branch network, cell for cell") {
    ParamCounts pc = param_count(orl_odsc_spec());
    auto m = rows_by_name(pc);
    CHECK(m["enc-u-1"] == 30);
    CHECK(m["enc-u-2"] == 84);
    CHECK(m["enc-u-3"] == 84);
    CHECK(m["enc-o-1"] == 30);
    CHECK(m["enc-o-2"] == 84);
    CHECK(m["self-expressive"] == 160000);
    CHECK(m["dec-1"] == 84);
    CHECK(m["dec-2"] == 84);
    CHECK(m["dec-3"] == 30);
    CHECK(pc.total == 160510);
}

TEST_CASE("parameter counts: isolated formulas") {
    // conv: k*k*cin*cout + cout
    NetworkSpec s = orl_dsc_spec();
    CHECK(rows_by_name(param_count(s))["dec-3"] == 25 * 5 * 1 + 1);
    // self-expressive: N^2 regardless of architecture
    s.n_samples = 400;
    CHECK(rows_by_name(param_count(s))["self-expressive"] == 160000);
    s = orl_odsc_spec();
    s.n_samples = 7;
    CHECK(rows_by_name(param_count(s))["self-expressive"] == 49);
}

TEST_CASE("receptive field extents as exact rationals") {
    CHECK(receptive_field(1, 3, RfMode::Undercomplete) == Rational(3, 1));
    CHECK(receptive_field(1, 3, RfMode::Overcomplete) == Rational(3, 1));
    CHECK(receptive_field(2, 3, RfMode::Undercomplete) == Rational(6, 1));
    CHECK(receptive_field(2, 3, RfMode::Overcomplete) == Rational(3, 2));
    CHECK(receptive_field(3, 5, RfMode::Undercomplete) == Rational(20, 1));
    CHECK(receptive_field(3, 5, RfMode::Overcomplete) == Rational(5, 4));
    CHECK_THROWS_AS(receptive_field(0, 3, RfMode::Undercomplete), ConfigError);
}

TEST_CASE("receptive field doubles (halves) per layer") {
    for (int k : {3, 5})
        for (int i = 1; i < 6; ++i) {
            Rational a = receptive_field(i, k, RfMode::Undercomplete);
            Rational b = receptive_field(i + 1, k, RfMode::Undercomplete);
            CHECK(b.value() == doctest::Approx(2.0 * a.value()));
            Rational c = receptive_field(i, k, RfMode::Overcomplete);
            Rational d = receptive_field(i + 1, k, RfMode::Overcomplete);
            CHECK(d.value() == doctest::Approx(0.5 * c.value()));
        }
}

TEST_CASE("spec validation catches inconsistent networks") {
    NetworkSpec s = orl_odsc_spec();
    s.enc_o.back().channels_out = 5; // add fusion needs equal channels
    CHECK_THROWS_AS(validate_spec(s), ConfigError);

    s = orl_dsc_spec();
    s.dec.back().channels_out = 2;
    CHECK_THROWS_AS(validate_spec(s), ConfigError);

    s = orl_dsc_spec();
    s.enc_u.pop_back(); // depth mismatch with decoder
    CHECK_THROWS_AS(validate_spec(s), ConfigError);
}

TEST_CASE("encode_fuse latent shapes for the reference geometries") {
    Rng rng(101);

    SUBCASE("concat fusion, 28x28, batch of 1000 rows (checked via small batch math)") {
        NetworkSpec s = mnist_odsc_spec();
        Network net = build_network(s, rng);
        // 28 -> 14 -> 7 -> 4 under ceil halving.
        CHECK(net.latent_h == 4);
        CHECK(net.latent_w == 4);
        // Run 8 samples through; the latent width must be 240 regardless of batch.
        Tensor x = random_tensor(8, 1, 28, 28, rng, 0.5);
        LatentBlock z = encode_fuse(net, x);
        CHECK(z.Z.rows() == 8);
        CHECK(z.Z.cols() == 240); // 5ch*4*4 + 10ch*4*4
        CHECK(z.channels == 15);
    }
    SUBCASE("add fusion, 32x32") {
        NetworkSpec s = orl_odsc_spec();
        Network net = build_network(s, rng);
        Tensor x = random_tensor(6, 1, 32, 32, rng, 0.5);
        LatentBlock z = encode_fuse(net, x);
        CHECK(z.Z.cols() == 48); // 3ch*4*4
    }
    SUBCASE("concat dimension is the sum of branch dimensions") {
        NetworkSpec cat = tiny_spec(4);
        NetworkSpec add = cat;
        add.fusion = Fusion::Add;
        Network nc = build_network(cat, rng);
        Network na = build_network(add, rng);
        Tensor x = random_tensor(4, 1, 6, 6, rng, 0.5);
        CHECK(encode_fuse(nc, x).Z.cols() == 2 * encode_fuse(na, x).Z.cols());
    }
}

TEST_CASE("encode_fuse maps identical samples to identical rows") {
    Rng rng(5);
    Network net = build_network(tiny_spec(3), rng);
    Tensor x(3, 1, 6, 6);
    Tensor one = random_tensor(1, 1, 6, 6, rng, 0.5);
    for (int i = 0; i < 3; ++i) x.data.segment(i * one.size(), one.size()) = one.data;
    Eigen::MatrixXd z = encode_fuse(net, x).Z;
    CHECK((z.row(0) - z.row(1)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((z.row(0) - z.row(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("self_express matches a naive product and is permutation-equivariant") {
    Rng rng(31);
    const int n = 7, d = 5;
    Eigen::MatrixXd z = random_matrix(n, d, rng);
    Eigen::MatrixXd c = random_matrix(n, n, rng);

    Eigen::MatrixXd got = self_express(z, c);
    Eigen::MatrixXd want = naive_matmul(c.transpose(), z);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);

    // Permute samples and conjugate C by the same permutation.
    Eigen::PermutationMatrix<Eigen::Dynamic> p(n);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
    for (int i = 0; i < n; ++i) p.indices()[i] = idx[i];
    Eigen::MatrixXd zp = p.transpose() * z; // row i of zp = row idx^-1... consistent both sides
    Eigen::MatrixXd cp = p.transpose() * c * p;
    Eigen::MatrixXd lhs = self_express(zp, cp);
    Eigen::MatrixXd rhs = p.transpose() * self_express(z, c);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(self_express(z, random_matrix(n + 1, n + 1, rng)), ShapeError);
}

TEST_CASE("decode/encode shape round-trip for all dataset geometries") {
    Rng rng(77);
    struct Geo { int h, w; };
    for (Geo g : {Geo{28, 28}, Geo{32, 32}, Geo{48, 42}, Geo{6, 6}}) {
        NetworkSpec s = tiny_spec(2, g.h, g.w);
        Network net = build_network(s, rng);
        Tensor x = random_tensor(2, 1, g.h, g.w, rng, 0.5);
        LatentBlock z = encode_fuse(net, x);
        Tensor xhat = decode(net, z.Z);
        CHECK(xhat.h == g.h);
        CHECK(xhat.w == g.w);
        CHECK(xhat.c == 1);
        CHECK(xhat.n == 2);
    }
}

TEST_CASE("loss_total_value closed-form example") {
    // One 1x1 image pair and a 1x1 coefficient "matrix".
    Tensor x(1, 1, 1, 1), xhat(1, 1, 1, 1);
    x.data[0] = 1.0;
    xhat.data[0] = 0.0;
    Eigen::MatrixXd z(1, 2);
    z << 3.0, 4.0; // ||z - c z|| with c = 0.5 -> ||(1.5,2)||^2 = 6.25
    Eigen::MatrixXd c(1, 1);
    c << 0.5;
    const double got = loss_total_value(x, xhat, z, c, 2.0, 3.0, 4.0);
    // 0.5*2*1 + 3*0.25 + 0.5*4*6.25 = 1 + 0.75 + 12.5
    CHECK(got == doctest::Approx(14.25));
    CHECK_THROWS_AS(loss_total_value(x, Tensor(1, 1, 2, 2), z, c, 1, 1, 1), ShapeError);
}

TEST_CASE("evaluate reports the same loss as loss_total_value") {
    Rng rng(404);
    Network net = build_network(tiny_spec(5), rng);
    Tensor x = random_tensor(5, 1, 6, 6, rng, 0.5);
    Objective obj = evaluate(net, x, Stage::Finetune);
    const double direct =
        loss_total_value(x, obj.xhat, obj.Z, net.C, net.spec.lambda1, net.spec.lambda2,
                         net.spec.lambda3);
    CHECK(obj.loss == doctest::Approx(direct).epsilon(1e-12));
}

namespace {

// Full-objective gradient check over all conv parameters and C.
void check_objective_gradients(Network net, const Tensor& x, Stage stage) {
    Objective obj = evaluate(net, x, stage);
    Eigen::VectorXd conv0 = flatten_conv(net);
    Eigen::VectorXd analytic_conv = flatten_conv_grads(net, obj);
    auto conv_fn = [&](const Eigen::VectorXd& v) {
        Network n2 = net;
        unflatten_conv(n2, v);
        return evaluate(n2, x, stage).loss;
    };
    CHECK(grad_check(conv_fn, conv0, analytic_conv) < 1e-4);

    if (stage == Stage::Finetune) {
        Eigen::VectorXd c0 = Eigen::Map<const Eigen::VectorXd>(net.C.data(), net.C.size());
        Eigen::VectorXd dc = Eigen::Map<const Eigen::VectorXd>(obj.dC.data(), obj.dC.size());
        auto c_fn = [&](const Eigen::VectorXd& v) {
            Network n2 = net;
            n2.C = Eigen::Map<const Eigen::MatrixXd>(v.data(), net.C.rows(), net.C.cols());
            return evaluate(n2, x, stage).loss;
        };
        CHECK(grad_check(c_fn, c0, dc) < 1e-4);
    }
}

} // namespace

TEST_CASE("full objective gradients match finite differences") {
    Rng rng(2024);
    SUBCASE("pretrain objective, concat fusion") {
        Network net = build_network(tiny_spec(4), rng);
        Tensor x = random_tensor(4, 1, 6, 6, rng, 0.5);
        check_objective_gradients(net, x, Stage::Pretrain);
    }
    SUBCASE("finetune objective, concat fusion") {
        Network net = build_network(tiny_spec(4), rng);
        net.C = random_matrix(4, 4, rng, 0.3);
        Tensor x = random_tensor(4, 1, 6, 6, rng, 0.5);
        check_objective_gradients(net, x, Stage::Finetune);
    }
    SUBCASE("finetune objective, add fusion, non-square input") {
        NetworkSpec s = tiny_spec(3, 6, 8);
        s.fusion = Fusion::Add;
        Network net = build_network(s, rng);
        net.C = random_matrix(3, 3, rng, 0.3);
        Tensor x = random_tensor(3, 1, 6, 8, rng, 0.5);
        check_objective_gradients(net, x, Stage::Finetune);
    }
    SUBCASE("single-branch variants") {
        NetworkSpec s = tiny_spec(3);
        s.variant = Variant::DscU;
        s.enc_o.clear();
        Network net = build_network(s, rng);
        Tensor x = random_tensor(3, 1, 6, 6, rng, 0.5);
        check_objective_gradients(net, x, Stage::Pretrain);

        NetworkSpec so = tiny_spec(3);
        so.variant = Variant::DscO;
        so.enc_u.clear();
        Network no = build_network(so, rng);
        check_objective_gradients(no, x, Stage::Pretrain);
    }
}

TEST_CASE("build_network initialization contract") {
    Rng rng(88);
    Network net = build_network(orl_odsc_spec(), rng);
    CHECK(net.C.rows() == 400);
    CHECK((net.C.array() == 1e-4).all());
    for (const auto* b : {&net.enc_u, &net.enc_o, &net.dec})
        for (const auto& l : *b) {
            CHECK(l.b.isZero());
            CHECK(l.w.cwiseAbs().maxCoeff() > 0.0);
        }
    // Seeded determinism.
    Rng r2(88);
    Network net2 = build_network(orl_odsc_spec(), r2);
    CHECK(flatten_conv(net) == flatten_conv(net2));
}

TEST_CASE("forward_features names and pre-resample sizes") {
    Rng rng(7);
    NetworkSpec s = tiny_spec(2, 8, 8);
    Network net = build_network(s, rng);
    Tensor x = random_tensor(2, 1, 8, 8, rng, 0.5);
    auto feats = forward_features(net, x);
    auto names = feature_names(s);
    REQUIRE(feats.size() == names.size());
    for (size_t i = 0; i < feats.size(); ++i) CHECK(feats[i].first == names[i]);
    // enc_u.1 is the conv+relu output before pooling: full 8x8.
    CHECK(feats[0].first == "enc_u.1");
    CHECK(feats[0].second.h == 8);
    // enc_o.1 before its upsample is also 8x8; after one upsample the second
    // overcomplete conv (absent here) would see 16x16.
    for (const auto& [name, t] : feats)
        if (name == "enc_o.1") CHECK(t.h == 8);
}
