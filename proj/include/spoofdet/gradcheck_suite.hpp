#pragma once

#include "spoofdet/gradcheck.hpp"
#include "spoofdet/lstm.hpp"
#include "spoofdet/objective.hpp"

namespace spoofdet {

namespace gradcheck_detail {

inline Tensor<double> rand_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = (init::uniform01(rng) * 2.0 - 1.0) * scale;
    return t;
}

}  // namespace gradcheck_detail

/// Central finite-difference checks for every differentiable operator, over
/// `n_seeds` seeds each. All checks run in 64-bit.
inline std::vector<GradCheckResult> run_gradcheck_suite(int n_seeds = 5, uint64_t base_seed = 1) {
    using gradcheck_detail::rand_tensor;
    std::vector<GradCheckResult> results;

    auto run = [&](const std::string& name, double tolerance,
                   const std::function<double(std::mt19937_64&)>& one_seed) {
        GradCheckResult r;
        r.name = name;
        r.tolerance = tolerance;
        for (int s = 0; s < n_seeds; ++s) {
            std::mt19937_64 rng(base_seed + 1000 * (s + 1) + std::hash<std::string>{}(name));
            r.max_rel_err = std::max(r.max_rel_err, one_seed(rng));
        }
        r.pass = r.max_rel_err < r.tolerance;
        results.push_back(r);
    };

    run("linear", 1e-6, [](std::mt19937_64& rng) {
        auto x = rand_tensor({3, 6}, rng);
        auto w = rand_tensor({4, 6}, rng, 0.6);
        auto b = rand_tensor({4}, rng, 0.3);
        auto wt = rand_tensor({3, 4}, rng);
        return max_rel_grad_error([&] { return ops::sum_all(ops::mul(ops::linear(x, w, &b), wt)); },
                                  {x, w, b});
    });

    run("sigmoid", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({4, 5}, rng, 2.0);
        auto wt = rand_tensor({4, 5}, rng);
        return max_rel_grad_error([&] { return ops::sum_all(ops::mul(ops::sigmoid(x), wt)); }, {x});
    });

    run("relu", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({4, 5}, rng, 2.0);
        // keep points away from the kink so central differences are valid
        for (int64_t i = 0; i < x.numel(); ++i)
            if (std::abs(x.data()[i]) < 1e-3) x.data()[i] += 0.01;
        auto wt = rand_tensor({4, 5}, rng);
        return max_rel_grad_error([&] { return ops::sum_all(ops::mul(ops::relu(x), wt)); }, {x});
    });

    run("tanh", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({4, 5}, rng, 2.0);
        auto wt = rand_tensor({4, 5}, rng);
        return max_rel_grad_error([&] { return ops::sum_all(ops::mul(ops::tanh_op(x), wt)); }, {x});
    });

    run("conv2d", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({1, 2, 5, 5}, rng);
        auto w = rand_tensor({3, 2, 3, 3}, rng, 0.5);
        auto b = rand_tensor({3}, rng, 0.3);
        auto wt = rand_tensor({1, 3, 5, 5}, rng);
        return max_rel_grad_error(
            [&] { return ops::sum_all(ops::mul(ops::conv2d(x, w, b, {1, 1}, {1, 1}), wt)); }, {x, w, b});
    });

    run("max_feature_map", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({1, 4, 3, 4}, rng);
        auto wt = rand_tensor({1, 2, 3, 4}, rng);
        return max_rel_grad_error([&] { return ops::sum_all(ops::mul(ops::max_feature_map(x), wt)); }, {x});
    });

    run("maxpool2d", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({1, 2, 6, 6}, rng);
        auto wt = rand_tensor({1, 2, 3, 3}, rng);
        return max_rel_grad_error([&] { return ops::sum_all(ops::mul(ops::maxpool2d(x), wt)); }, {x});
    });

    run("batch_norm2d", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({2, 3, 4, 4}, rng);
        auto gamma = rand_tensor({3}, rng, 0.5);
        for (int i = 0; i < 3; ++i) gamma.data()[i] += 1.0;
        auto beta = rand_tensor({3}, rng, 0.3);
        auto wt = rand_tensor({2, 3, 4, 4}, rng);
        return max_rel_grad_error(
            [&] {
                Tensor<double> rm({3});
                auto rv = Tensor<double>::full({3}, 1.0);
                return ops::sum_all(
                    ops::mul(ops::batch_norm2d(x, gamma, beta, rm, rv, 0.1, 1e-5, true), wt));
            },
            {x, gamma, beta});
    });

    run("se_block", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({1, 4, 3, 3}, rng);
        auto fc1w = rand_tensor({2, 4}, rng, 0.7);
        auto fc1b = rand_tensor({2}, rng, 0.3);
        auto fc2w = rand_tensor({4, 2}, rng, 0.7);
        auto fc2b = rand_tensor({4}, rng, 0.3);
        auto wt = rand_tensor({1, 4, 3, 3}, rng);
        return max_rel_grad_error(
            [&] { return ops::sum_all(ops::mul(ops::se_block(x, fc1w, fc1b, fc2w, fc2b), wt)); },
            {x, fc1w, fc1b, fc2w, fc2b});
    });

    run("channel_scale", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({2, 3, 3, 3}, rng);
        auto s = rand_tensor({2, 3}, rng);
        auto wt = rand_tensor({2, 3, 3, 3}, rng);
        return max_rel_grad_error([&] { return ops::sum_all(ops::mul(ops::channel_scale(x, s), wt)); },
                                  {x, s});
    });

    run("bilstm", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({1, 3, 4}, rng);
        ops::BiLstmParams<double> p;
        p.fw = {rand_tensor({8, 4}, rng, 0.4), rand_tensor({8, 2}, rng, 0.4), rand_tensor({8}, rng, 0.2)};
        p.bw = {rand_tensor({8, 4}, rng, 0.4), rand_tensor({8, 2}, rng, 0.4), rand_tensor({8}, rng, 0.2)};
        auto wt = rand_tensor({1, 3, 4}, rng);
        return max_rel_grad_error(
            [&] { return ops::sum_all(ops::mul(ops::bilstm(x, {3}, p), wt)); },
            {x, p.fw.wx, p.fw.wh, p.fw.b, p.bw.wx, p.bw.wh, p.bw.b});
    });

    run("mean_over_axis", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({2, 4, 3}, rng);
        auto wt = rand_tensor({2, 3}, rng);
        return max_rel_grad_error([&] { return ops::sum_all(ops::mul(ops::mean_over_axis(x, 1), wt)); },
                                  {x});
    });

    run("min_over_axis", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({2, 4, 3}, rng);
        auto wt = rand_tensor({2, 3}, rng);
        return max_rel_grad_error([&] { return ops::sum_all(ops::mul(ops::min_over_axis(x, 1), wt)); },
                                  {x});
    });

    run("masked_mean_time", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({2, 4, 5}, rng);
        auto wt = rand_tensor({2, 5}, rng);
        std::vector<int64_t> lens{3, 4};
        return max_rel_grad_error(
            [&] { return ops::sum_all(ops::mul(ops::masked_mean_time(x, lens), wt)); }, {x});
    });

    run("argmin_select", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({2, 4, 2}, rng);
        auto wt = rand_tensor({2, 2}, rng);
        std::vector<int64_t> lens{3, 4};
        return max_rel_grad_error([&] { return ops::sum_all(ops::mul(ops::argmin_select(x, lens), wt)); },
                                  {x});
    });

    run("l2_normalize", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({3, 6}, rng);
        auto wt = rand_tensor({3, 6}, rng);
        return max_rel_grad_error([&] { return ops::sum_all(ops::mul(ops::l2_normalize(x), wt)); }, {x});
    });

    run("cosine_head", 1e-4, [](std::mt19937_64& rng) {
        auto h = rand_tensor({2, 3, 6}, rng);
        auto c = rand_tensor({2, 6}, rng);
        auto wt = rand_tensor({2, 3, 2}, rng);
        return max_rel_grad_error(
            [&] {
                auto cos = ops::linear_nobias(ops::l2_normalize(h), ops::l2_normalize(c));
                return ops::sum_all(ops::mul(cos, wt));
            },
            {h, c});
    });

    run("dropout", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({4, 6}, rng);
        auto wt = rand_tensor({4, 6}, rng);
        const uint64_t mask_seed = rng();
        return max_rel_grad_error(
            [&] {
                std::mt19937_64 drng(mask_seed);  // same mask on every evaluation
                return ops::sum_all(ops::mul(ops::dropout(x, 0.3, true, &drng), wt));
            },
            {x});
    });

    run("time_major_flatten", 1e-4, [](std::mt19937_64& rng) {
        auto x = rand_tensor({2, 3, 2, 2}, rng);
        auto wt = rand_tensor({2, 2, 6}, rng);
        return max_rel_grad_error([&] { return ops::sum_all(ops::mul(ops::time_major_flatten(x), wt)); },
                                  {x});
    });

    run("loss_utt", 1e-6, [](std::mt19937_64& rng) {
        auto cos = rand_tensor({3, 2}, rng);
        std::vector<int> y{kBonaFide, kSpoof, kBonaFide};
        return max_rel_grad_error([&] { return loss_utt(cos, y); }, {cos});
    });

    run("loss_seg", 1e-6, [](std::mt19937_64& rng) {
        auto cos = rand_tensor({2, 3, 2}, rng);
        std::vector<std::vector<int>> y{{1, 2}, {2, 2, 1}};
        std::vector<int64_t> lens{2, 3};
        return max_rel_grad_error([&] { return loss_seg(cos, y, lens); }, {cos});
    });

    run("fused_loss", 1e-6, [](std::mt19937_64& rng) {
        auto cu = rand_tensor({2, 2}, rng);
        auto cs = rand_tensor({2, 3, 2}, rng);
        std::vector<int> yu{kBonaFide, kSpoof};
        std::vector<std::vector<int>> ys{{1, 2, 1}, {2, 1}};
        std::vector<int64_t> lens{3, 2};
        return max_rel_grad_error([&] { return fused_loss(loss_utt(cu, yu), loss_seg(cs, ys, lens)).total; },
                                  {cu, cs});
    });

    return results;
}

}  // namespace spoofdet
