#include "odsc/model.hpp"

#include <numeric>

namespace odsc {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::DscU: return "dsc-u";
        case Variant::DscO: return "dsc-o";
        case Variant::Odsc: return "odsc";
    }
    return "?";
}

Variant variant_from_string(const std::string& s) {
    if (s == "dsc-u") return Variant::DscU;
    if (s == "dsc-o") return Variant::DscO;
    if (s == "odsc") return Variant::Odsc;
    throw ConfigError("unknown variant '" + s + "' (expected dsc-u, dsc-o or odsc)");
}

std::pair<int, int> latent_size(const NetworkSpec& spec) {
    int h = spec.in_h, w = spec.in_w;
    for (size_t i = 0; i < spec.dec.size(); ++i) {
        h = (h + 1) / 2;
        w = (w + 1) / 2;
    }
    return {h, w};
}

int fused_channels(const NetworkSpec& spec) {
    switch (spec.variant) {
        case Variant::DscU: return spec.enc_u.back().channels_out;
        case Variant::DscO: return spec.enc_o.back().channels_out;
        case Variant::Odsc:
            if (spec.fusion == Fusion::Concat)
                return spec.enc_u.back().channels_out + spec.enc_o.back().channels_out;
            return spec.enc_u.back().channels_out;
    }
    return 0;
}

std::vector<std::pair<int, int>> decoder_targets(const NetworkSpec& spec) {
    // Sizes along the undercomplete pooling chain, innermost first.
    std::vector<std::pair<int, int>> chain{{spec.in_h, spec.in_w}};
    for (size_t i = 0; i < spec.dec.size(); ++i)
        chain.push_back({(chain.back().first + 1) / 2, (chain.back().second + 1) / 2});
    std::vector<std::pair<int, int>> targets;
    for (size_t i = chain.size() - 1; i-- > 0;) targets.push_back(chain[i]);
    return targets;
}

void validate_spec(const NetworkSpec& spec) {
    if (spec.in_h < 1 || spec.in_w < 1 || spec.in_c < 1)
        throw ConfigError("network spec: invalid input shape");
    if (spec.n_samples < 1) throw ConfigError("network spec: n_samples must be positive");
    if (spec.dec.empty()) throw ConfigError("network spec: decoder is empty");
    if (spec.dec.back().channels_out != 1)
        throw ConfigError("network spec: final decoder layer must output 1 channel");
    if (spec.uses_u()) {
        if (spec.enc_u.empty()) throw ConfigError("network spec: undercomplete encoder is empty");
        if (spec.enc_u.size() != spec.dec.size())
            throw ConfigError("network spec: encoder-U depth must match decoder depth");
    }
    if (spec.uses_o() && spec.enc_o.empty())
        throw ConfigError("network spec: overcomplete encoder is empty");
    if (spec.variant == Variant::Odsc && spec.fusion == Fusion::Add &&
        spec.enc_u.back().channels_out != spec.enc_o.back().channels_out)
        throw ConfigError("network spec: add fusion requires equal branch channel counts (" +
                          std::to_string(spec.enc_u.back().channels_out) + " vs " +
                          std::to_string(spec.enc_o.back().channels_out) + ")");
    for (const auto* branch : {&spec.enc_u, &spec.enc_o, &spec.dec})
        for (const auto& l : *branch)
            if (l.kernel % 2 == 0 || l.kernel < 1 || l.channels_out < 1)
                throw ConfigError("network spec: layer needs odd kernel and positive channels");
}

namespace {

Eigen::Index conv_params(int k, int cin, const LayerSpec& l) {
    return static_cast<Eigen::Index>(k) * k * cin * l.channels_out +
           (l.bias_on_input ? cin : l.channels_out);
}

} // namespace

ParamCounts param_count(const NetworkSpec& spec) {
    validate_spec(spec);
    ParamCounts pc;
    auto add_branch = [&](const std::vector<LayerSpec>& layers, const std::string& prefix, int cin0) {
        int cin = cin0;
        for (size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            pc.rows.push_back({prefix + std::to_string(i + 1), l.kernel, l.channels_out,
                               conv_params(l.kernel, cin, l)});
            cin = l.channels_out;
        }
    };
    if (spec.uses_u()) add_branch(spec.enc_u, "enc-u-", spec.in_c);
    if (spec.uses_o()) add_branch(spec.enc_o, "enc-o-", spec.in_c);
    const Eigen::Index n = spec.n_samples;
    pc.rows.push_back({"self-expressive", 0, 0, n * n});
    add_branch(spec.dec, "dec-", fused_channels(spec));
    pc.total = 0;
    for (const auto& r : pc.rows) pc.total += r.params;
    return pc;
}

Rational::Rational(long long n, long long d) : num(n), den(d) {
    if (den == 0) throw ConfigError("Rational: zero denominator");
    if (den < 0) { num = -num; den = -den; }
    const long long g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) { num /= g; den /= g; }
}

Rational receptive_field(int layer_index, int kernel, RfMode mode) {
    if (layer_index < 1) throw ConfigError("receptive_field: layer index must be >= 1");
    long long scale = 1;
    for (int i = 1; i < layer_index; ++i) scale *= 2;
    if (mode == RfMode::Undercomplete) return Rational(kernel * scale, 1);
    return Rational(kernel, scale);
}

Network build_network(const NetworkSpec& spec, Rng& rng) {
    validate_spec(spec);
    Network net;
    net.spec = spec;
    auto [lh, lw] = latent_size(spec);
    net.latent_h = lh;
    net.latent_w = lw;
    if (spec.uses_u()) {
        // Sanity: the undercomplete pooling chain must land on the mirror latent size.
        int h = spec.in_h, w = spec.in_w;
        for (size_t i = 0; i < spec.enc_u.size(); ++i) { h = (h + 1) / 2; w = (w + 1) / 2; }
        if (h != lh || w != lw)
            throw ConfigError("network spec: encoder-U latent size does not mirror the decoder");
    }
    auto init_branch = [&](const std::vector<LayerSpec>& layers, int cin0) {
        std::vector<ConvWeights> out;
        int cin = cin0;
        for (const auto& l : layers) {
            ConvWeights cw(l.kernel, cin, l.channels_out, l.bias_on_input);
            const double std = std::sqrt(2.0 / (static_cast<double>(l.kernel) * l.kernel * cin));
            for (Eigen::Index i = 0; i < cw.w.size(); ++i) cw.w[i] = std * rng.normal();
            out.push_back(std::move(cw));
            cin = l.channels_out;
        }
        return out;
    };
    if (spec.uses_u()) net.enc_u = init_branch(spec.enc_u, spec.in_c);
    if (spec.uses_o()) net.enc_o = init_branch(spec.enc_o, spec.in_c);
    net.dec = init_branch(spec.dec, fused_channels(spec));
    net.C = Eigen::MatrixXd::Constant(spec.n_samples, spec.n_samples, 1e-4);
    return net;
}

namespace {

Eigen::MatrixXd rows_from_tensor(const Tensor& t) {
    const Eigen::Index d = static_cast<Eigen::Index>(t.c) * t.h * t.w;
    Eigen::MatrixXd z(t.n, d);
    for (int i = 0; i < t.n; ++i) z.row(i) = t.data.segment(i * d, d);
    return z;
}

Tensor tensor_from_rows(const Eigen::MatrixXd& z, int c, int h, int w) {
    if (z.cols() != static_cast<Eigen::Index>(c) * h * w)
        throw ShapeError("latent rows: dimension " + std::to_string(z.cols()) + " != " +
                         std::to_string(static_cast<Eigen::Index>(c) * h * w));
    Tensor t(static_cast<int>(z.rows()), c, h, w);
    const Eigen::Index d = z.cols();
    for (Eigen::Index i = 0; i < z.rows(); ++i) t.data.segment(i * d, d) = z.row(i);
    return t;
}

struct BranchCache {
    std::vector<Tensor> conv_in;  // input of each conv
    std::vector<Tensor> conv_out; // pre-relu
    std::vector<Tensor> act;      // post-relu (pre-resample)
    std::vector<PoolResult> pools;
    Tensor out; // branch output after the last resample
};

BranchCache forward_branch_u(const Network& net, const Tensor& x) {
    BranchCache c;
    Tensor cur = x;
    for (const auto& layer : net.enc_u) {
        c.conv_in.push_back(cur);
        c.conv_out.push_back(conv2d(cur, layer));
        c.act.push_back(relu(c.conv_out.back()));
        c.pools.push_back(maxpool2(c.act.back()));
        cur = c.pools.back().out;
    }
    c.out = cur;
    return c;
}

BranchCache forward_branch_o(const Network& net, const Tensor& x) {
    BranchCache c;
    Tensor cur = x;
    for (const auto& layer : net.enc_o) {
        c.conv_in.push_back(cur);
        c.conv_out.push_back(conv2d(cur, layer));
        c.act.push_back(relu(c.conv_out.back()));
        cur = upsample_bilinear2(c.act.back());
    }
    c.out = cur;
    return c;
}

struct EncodeState {
    BranchCache u, o;
    PoolResult o_adaptive; // adaptive pool on the overcomplete branch output
    Tensor fused;
    LatentBlock latent;
};

EncodeState forward_encode(const Network& net, const Tensor& x) {
    const NetworkSpec& spec = net.spec;
    if (x.h != spec.in_h || x.w != spec.in_w || x.c != spec.in_c)
        throw ShapeError("encode: input shape " + x.shape_str() + " does not match spec");
    EncodeState st;
    if (spec.uses_u()) st.u = forward_branch_u(net, x);
    if (spec.uses_o()) {
        st.o = forward_branch_o(net, x);
        st.o_adaptive = adaptive_maxpool(st.o.out, net.latent_h, net.latent_w);
    }
    const int fc = fused_channels(spec);
    switch (spec.variant) {
        case Variant::DscU: st.fused = st.u.out; break;
        case Variant::DscO: st.fused = st.o_adaptive.out; break;
        case Variant::Odsc: {
            const Tensor& a = st.u.out;
            const Tensor& b = st.o_adaptive.out;
            if (spec.fusion == Fusion::Add) {
                st.fused = a;
                st.fused.data += b.data;
            } else {
                st.fused = Tensor(a.n, fc, a.h, a.w);
                const Eigen::Index plane = static_cast<Eigen::Index>(a.h) * a.w;
                for (int i = 0; i < a.n; ++i) {
                    st.fused.data.segment(st.fused.idx(i, 0, 0, 0), a.c * plane) =
                        a.data.segment(a.idx(i, 0, 0, 0), a.c * plane);
                    st.fused.data.segment(st.fused.idx(i, a.c, 0, 0), b.c * plane) =
                        b.data.segment(b.idx(i, 0, 0, 0), b.c * plane);
                }
            }
            break;
        }
    }
    st.latent.Z = rows_from_tensor(st.fused);
    st.latent.channels = fc;
    st.latent.h = net.latent_h;
    st.latent.w = net.latent_w;
    return st;
}

struct DecodeState {
    std::vector<Tensor> conv_in, conv_out, act;
    Tensor xhat;
};

DecodeState forward_decode(const Network& net, const Eigen::MatrixXd& latent_rows) {
    const NetworkSpec& spec = net.spec;
    DecodeState st;
    Tensor cur = tensor_from_rows(latent_rows, fused_channels(spec), net.latent_h, net.latent_w);
    const auto targets = decoder_targets(spec);
    for (size_t i = 0; i < net.dec.size(); ++i) {
        const bool last = (i + 1 == net.dec.size());
        st.conv_in.push_back(cur);
        st.conv_out.push_back(conv2d(cur, net.dec[i]));
        st.act.push_back(last ? st.conv_out.back() : relu(st.conv_out.back()));
        cur = resize_bilinear(st.act.back(), targets[i].first, targets[i].second);
    }
    st.xhat = cur;
    return st;
}

// Gradient of the decoder; returns the gradient w.r.t. the latent rows and
// fills per-layer weight gradients.
Eigen::MatrixXd backward_decode(const Network& net, const DecodeState& st, const Tensor& dxhat,
                                std::vector<Eigen::VectorXd>& dw, std::vector<Eigen::VectorXd>& db) {
    dw.resize(net.dec.size());
    db.resize(net.dec.size());
    Tensor cur = dxhat;
    for (size_t i = net.dec.size(); i-- > 0;) {
        const bool last = (i + 1 == net.dec.size());
        Tensor d_act = resize_bilinear_backward(st.act[i].h, st.act[i].w, cur);
        Tensor d_conv = last ? d_act : relu_backward(st.conv_out[i], d_act);
        ConvGrads g = conv2d_backward(st.conv_in[i], net.dec[i], d_conv);
        dw[i] = std::move(g.dw);
        db[i] = std::move(g.db);
        cur = std::move(g.dx);
    }
    return rows_from_tensor(cur);
}

void backward_branch_u(const Network& net, const BranchCache& c, const Tensor& d_out,
                       std::vector<Eigen::VectorXd>& dw, std::vector<Eigen::VectorXd>& db) {
    dw.resize(net.enc_u.size());
    db.resize(net.enc_u.size());
    Tensor cur = d_out;
    for (size_t i = net.enc_u.size(); i-- > 0;) {
        Tensor d_act = maxpool2_backward(c.act[i], c.pools[i], cur);
        Tensor d_conv = relu_backward(c.conv_out[i], d_act);
        ConvGrads g = conv2d_backward(c.conv_in[i], net.enc_u[i], d_conv);
        dw[i] = std::move(g.dw);
        db[i] = std::move(g.db);
        cur = std::move(g.dx);
    }
}

void backward_branch_o(const Network& net, const EncodeState& st, const Tensor& d_pooled,
                       std::vector<Eigen::VectorXd>& dw, std::vector<Eigen::VectorXd>& db) {
    dw.resize(net.enc_o.size());
    db.resize(net.enc_o.size());
    Tensor cur = adaptive_maxpool_backward(st.o.out, st.o_adaptive, d_pooled);
    for (size_t i = net.enc_o.size(); i-- > 0;) {
        Tensor d_act = upsample_bilinear2_backward(st.o.act[i], cur);
        Tensor d_conv = relu_backward(st.o.conv_out[i], d_act);
        ConvGrads g = conv2d_backward(st.o.conv_in[i], net.enc_o[i], d_conv);
        dw[i] = std::move(g.dw);
        db[i] = std::move(g.db);
        cur = std::move(g.dx);
    }
}

} // namespace

LatentBlock encode_fuse(const Network& net, const Tensor& x) {
    return forward_encode(net, x).latent;
}

Eigen::MatrixXd self_express(const Eigen::MatrixXd& z, const Eigen::MatrixXd& c) {
    if (c.rows() != c.cols() || c.rows() != z.rows())
        throw ShapeError("self_express: C must be NxN with N = rows of Z");
    return c.transpose() * z;
}

Tensor decode(const Network& net, const Eigen::MatrixXd& latent_rows) {
    return forward_decode(net, latent_rows).xhat;
}

double loss_total_value(const Tensor& x, const Tensor& xhat, const Eigen::MatrixXd& z,
                        const Eigen::MatrixXd& c, double l1, double l2, double l3) {
    if (!x.same_shape(xhat)) throw ShapeError("loss_total: X and Xhat shapes differ");
    const double recon = (x.data - xhat.data).squaredNorm();
    const double reg = c.squaredNorm();
    const double self = (z - self_express(z, c)).squaredNorm();
    return 0.5 * l1 * recon + l2 * reg + 0.5 * l3 * self;
}

Objective evaluate(const Network& net, const Tensor& x, Stage stage) {
    const NetworkSpec& spec = net.spec;
    if (stage == Stage::Finetune && x.n != spec.n_samples)
        throw ShapeError("finetune: batch size " + std::to_string(x.n) + " != N=" +
                         std::to_string(spec.n_samples));
    Objective obj;
    EncodeState enc = forward_encode(net, x);
    obj.Z = enc.latent.Z;

    Eigen::MatrixXd din_rows;
    if (stage == Stage::Finetune)
        din_rows = self_express(obj.Z, net.C);
    else
        din_rows = obj.Z;
    DecodeState dec = forward_decode(net, din_rows);
    obj.xhat = dec.xhat;

    const Eigen::VectorXd resid = obj.xhat.data - x.data;
    obj.recon_term = resid.squaredNorm();

    Tensor dxhat(x.n, x.c, x.h, x.w);
    Eigen::MatrixXd dz;
    if (stage == Stage::Pretrain) {
        // L_r = ||X - Xhat||_F^2
        obj.loss = obj.recon_term;
        dxhat.data = 2.0 * resid;
        dz = backward_decode(net, dec, dxhat, obj.dw_dec, obj.db_dec);
    } else {
        const double l1 = spec.lambda1, l2 = spec.lambda2, l3 = spec.lambda3;
        const Eigen::MatrixXd r = obj.Z - din_rows; // Z - Z C
        obj.reg_term = net.C.squaredNorm();
        obj.self_term = r.squaredNorm();
        obj.loss = 0.5 * l1 * obj.recon_term + l2 * obj.reg_term + 0.5 * l3 * obj.self_term;
        dxhat.data = l1 * resid;
        Eigen::MatrixXd d_din = backward_decode(net, dec, dxhat, obj.dw_dec, obj.db_dec);
        obj.dC = 2.0 * l2 * net.C - l3 * (obj.Z * r.transpose()) + obj.Z * d_din.transpose();
        dz = l3 * (r - net.C * r) + net.C * d_din;
    }

    // Split the fused-latent gradient back into the branches.
    Tensor d_fused = tensor_from_rows(dz, enc.latent.channels, enc.latent.h, enc.latent.w);
    Tensor d_u, d_o;
    switch (spec.variant) {
        case Variant::DscU: d_u = d_fused; break;
        case Variant::DscO: d_o = d_fused; break;
        case Variant::Odsc:
            if (spec.fusion == Fusion::Add) {
                d_u = d_fused;
                d_o = d_fused;
            } else {
                const int cu = spec.enc_u.back().channels_out;
                const int co = spec.enc_o.back().channels_out;
                const Eigen::Index plane = static_cast<Eigen::Index>(d_fused.h) * d_fused.w;
                d_u = Tensor(d_fused.n, cu, d_fused.h, d_fused.w);
                d_o = Tensor(d_fused.n, co, d_fused.h, d_fused.w);
                for (int i = 0; i < d_fused.n; ++i) {
                    d_u.data.segment(d_u.idx(i, 0, 0, 0), cu * plane) =
                        d_fused.data.segment(d_fused.idx(i, 0, 0, 0), cu * plane);
                    d_o.data.segment(d_o.idx(i, 0, 0, 0), co * plane) =
                        d_fused.data.segment(d_fused.idx(i, cu, 0, 0), co * plane);
                }
            }
            break;
    }
    if (spec.uses_u()) backward_branch_u(net, enc.u, d_u, obj.dw_enc_u, obj.db_enc_u);
    if (spec.uses_o()) backward_branch_o(net, enc, d_o, obj.dw_enc_o, obj.db_enc_o);

    if (!std::isfinite(obj.loss) || !obj.xhat.all_finite())
        throw NumericError("evaluate: non-finite loss or reconstruction");
    return obj;
}

Eigen::VectorXd flatten_conv(const Network& net) {
    Eigen::Index total = 0;
    for (const auto* b : {&net.enc_u, &net.enc_o, &net.dec})
        for (const auto& l : *b) total += l.param_count();
    Eigen::VectorXd flat(total);
    Eigen::Index off = 0;
    for (const auto* b : {&net.enc_u, &net.enc_o, &net.dec})
        for (const auto& l : *b) {
            flat.segment(off, l.w.size()) = l.w;
            off += l.w.size();
            flat.segment(off, l.b.size()) = l.b;
            off += l.b.size();
        }
    return flat;
}

void unflatten_conv(Network& net, const Eigen::VectorXd& flat) {
    Eigen::Index off = 0;
    for (auto* b : {&net.enc_u, &net.enc_o, &net.dec})
        for (auto& l : *b) {
            l.w = flat.segment(off, l.w.size());
            off += l.w.size();
            l.b = flat.segment(off, l.b.size());
            off += l.b.size();
        }
    if (off != flat.size()) throw ShapeError("unflatten_conv: size mismatch");
}

Eigen::VectorXd flatten_conv_grads(const Network& net, const Objective& obj) {
    Eigen::VectorXd flat(flatten_conv(net).size());
    Eigen::Index off = 0;
    auto put = [&](const std::vector<Eigen::VectorXd>& dws, const std::vector<Eigen::VectorXd>& dbs) {
        for (size_t i = 0; i < dws.size(); ++i) {
            flat.segment(off, dws[i].size()) = dws[i];
            off += dws[i].size();
            flat.segment(off, dbs[i].size()) = dbs[i];
            off += dbs[i].size();
        }
    };
    put(obj.dw_enc_u, obj.db_enc_u);
    put(obj.dw_enc_o, obj.db_enc_o);
    put(obj.dw_dec, obj.db_dec);
    if (off != flat.size()) throw ShapeError("flatten_conv_grads: size mismatch");
    return flat;
}

std::vector<std::pair<std::string, Tensor>> forward_features(const Network& net, const Tensor& x) {
    std::vector<std::pair<std::string, Tensor>> feats;
    EncodeState enc = forward_encode(net, x);
    for (size_t i = 0; i < enc.u.act.size(); ++i)
        feats.emplace_back("enc_u." + std::to_string(i + 1), enc.u.act[i]);
    for (size_t i = 0; i < enc.o.act.size(); ++i)
        feats.emplace_back("enc_o." + std::to_string(i + 1), enc.o.act[i]);
    DecodeState dec = forward_decode(net, enc.latent.Z);
    for (size_t i = 0; i < dec.act.size(); ++i)
        feats.emplace_back("dec." + std::to_string(i + 1), dec.act[i]);
    return feats;
}

std::vector<std::string> feature_names(const NetworkSpec& spec) {
    std::vector<std::string> names;
    if (spec.uses_u())
        for (size_t i = 0; i < spec.enc_u.size(); ++i) names.push_back("enc_u." + std::to_string(i + 1));
    if (spec.uses_o())
        for (size_t i = 0; i < spec.enc_o.size(); ++i) names.push_back("enc_o." + std::to_string(i + 1));
    for (size_t i = 0; i < spec.dec.size(); ++i) names.push_back("dec." + std::to_string(i + 1));
    return names;
}

} // namespace odsc
