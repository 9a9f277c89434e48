#include "asmr/diffnet.hpp"

#include <cmath>
#include <string>

#include "asmr/errors.hpp"

namespace asmr {

EncoderNet make_encoder(const std::vector<std::size_t>& dims, bool normalize_output, Rng& rng) {
    if (dims.size() < 2) throw ConfigError("make_encoder: need at least input and output dims");
    EncoderNet net;
    net.normalize_output = normalize_output;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t fan_in = dims[l];
        const std::size_t fan_out = dims[l + 1];
        DenseLayer layer;
        layer.weight = Matrix(fan_out, fan_in);
        layer.bias.assign(fan_out, 0.0);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& w : layer.weight.data) w = rng.uniform(-limit, limit);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

NetGrads NetGrads::like(const EncoderNet& net) {
    NetGrads g;
    g.layers.reserve(net.layers.size());
    for (const auto& layer : net.layers) {
        LayerGrads lg;
        lg.d_weight = Matrix(layer.weight.rows, layer.weight.cols);
        lg.d_bias.assign(layer.bias.size(), 0.0);
        g.layers.push_back(std::move(lg));
    }
    return g;
}

void NetGrads::zero() {
    for (auto& lg : layers) {
        lg.d_weight.fill(0.0);
        lg.d_bias.assign(lg.d_bias.size(), 0.0);
    }
}

void forward_batch(const EncoderNet& net, const Matrix& X, ForwardCache& cache) {
    if (net.layers.empty()) throw NumericError("forward: empty network");
    if (X.cols != net.input_dim())
        throw NumericError("forward: input dim " + std::to_string(X.cols) + " != expected " +
                           std::to_string(net.input_dim()));
    const std::size_t L = net.layers.size();
    cache.input = X;
    cache.pre.assign(L, Matrix{});
    cache.post.assign(L, Matrix{});

    const Matrix* a = &cache.input;
    for (std::size_t l = 0; l < L; ++l) {
        const DenseLayer& layer = net.layers[l];
        Matrix& z = cache.pre[l];
        z = Matrix(X.rows, layer.weight.rows);
        gemm_nt(*a, layer.weight, z);
        add_row_vector(z, layer.bias);
        if (l + 1 < L) {
            Matrix& act = cache.post[l];
            act = Matrix(z.rows, z.cols);
            relu(z, act);
            a = &act;
        }
    }

    const Matrix& z_last = cache.pre[L - 1];
    if (net.normalize_output) {
        cache.output = Matrix(z_last.rows, z_last.cols);
        rows_l2_normalize(z_last, cache.output, cache.prenorm_norms);
    } else {
        cache.output = z_last;
        cache.prenorm_norms.clear();
    }
}

Vec forward(const EncoderNet& net, const Vec& x) {
    Matrix X(1, x.size());
    X.data = x;
    ForwardCache cache;
    forward_batch(net, X, cache);
    return cache.output.data;
}

void backward_batch(const EncoderNet& net, const ForwardCache& cache, const Matrix& upstream,
                    NetGrads& grads, Matrix* d_input) {
    const std::size_t L = net.layers.size();
    if (grads.layers.size() != L) throw NumericError("backward: tape/net layer count mismatch");
    if (!upstream.same_shape(cache.output)) throw NumericError("backward: upstream shape mismatch");

    Matrix dz;
    if (net.normalize_output) {
        dz = Matrix(upstream.rows, upstream.cols);
        rows_l2_normalize_backward(cache.output, cache.prenorm_norms, upstream, dz);
    } else {
        dz = upstream;
    }

    for (std::size_t l = L; l-- > 0;) {
        const Matrix& a_prev = l == 0 ? cache.input : cache.post[l - 1];
        gemm_tn(dz, a_prev, grads.layers[l].d_weight, /*accumulate=*/true);
        col_sums(dz, grads.layers[l].d_bias, /*accumulate=*/true);

        const bool need_da = l > 0 || d_input != nullptr;
        if (!need_da) break;
        Matrix da(dz.rows, net.layers[l].weight.cols);
        gemm_nn(dz, net.layers[l].weight, da);
        if (l == 0) {
            *d_input = std::move(da);
        } else {
            dz = Matrix(da.rows, da.cols);
            relu_backward(cache.pre[l - 1], da, dz);
        }
    }
}

NetGrads backward(const EncoderNet& net, const Vec& x, const Vec& upstream) {
    Matrix X(1, x.size());
    X.data = x;
    ForwardCache cache;
    forward_batch(net, X, cache);
    Matrix up(1, upstream.size());
    up.data = upstream;
    NetGrads grads = NetGrads::like(net);
    backward_batch(net, cache, up, grads);
    return grads;
}

}  // namespace asmr
