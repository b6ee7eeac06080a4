// SPDX-License-Identifier: Apache-2.0
#include "flowtok/prior/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowtok/error.hpp"

namespace flowtok::prior {

using nlohmann::json;

void SamplingConfig::validate() const {
    if (!(top_p > 0.0 && top_p <= 1.0)) throw UserError("sampling: top_p must lie in (0, 1]");
    if (min_p && !(*min_p >= 0.0 && *min_p <= 1.0)) throw UserError("sampling: min_p must lie in [0, 1]");
    if (best_of == 0) throw UserError("sampling: best_of must be at least 1");
    if (max_codes && *max_codes == 0) throw UserError("sampling: max_codes must be positive");
}

json to_json(const SamplingConfig& c) {
    json j = {{"top_p", c.top_p}, {"greedy", c.greedy}, {"best_of", c.best_of}};
    j["min_p"] = c.min_p ? json(*c.min_p) : json(nullptr);
    j["max_codes"] = c.max_codes ? json(*c.max_codes) : json(nullptr);
    return j;
}

SamplingConfig sampling_config_from_json(const json& j, SamplingConfig c) {
    if (!j.is_object()) throw UserError("sampling config must be a JSON object");
    const json defaults = to_json(SamplingConfig{});
    for (auto& [key, _] : j.items()) {
        if (!defaults.contains(key)) throw UserError("sampling config: unknown key '" + key + "'");
    }
    try {
        c.top_p = j.value("top_p", c.top_p);
        c.greedy = j.value("greedy", c.greedy);
        c.best_of = j.value("best_of", c.best_of);
        if (j.contains("min_p")) c.min_p = j["min_p"].is_null() ? std::nullopt : std::optional<double>(j["min_p"].get<double>());
        if (j.contains("max_codes")) {
            c.max_codes = j["max_codes"].is_null() ? std::nullopt : std::optional<std::size_t>(j["max_codes"].get<std::size_t>());
        }
    } catch (const json::exception& e) {
        throw UserError(std::string("sampling config: ") + e.what());
    }
    c.validate();
    return c;
}

std::vector<std::size_t> truncation_set(std::span<const double> probs, double top_p, std::optional<double> min_p) {
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    if (order.empty() || !(probs[order[0]] > 0.0)) throw NumericError("sampling: no token has positive probability");
    if (min_p) {
        const double floor = *min_p * probs[order[0]];
        std::size_t keep = 0;
        while (keep < order.size() && probs[order[keep]] >= floor && probs[order[keep]] > 0.0) ++keep;
        order.resize(std::max<std::size_t>(keep, 1));
    }
    double total = 0.0;
    for (auto i : order) total += probs[i];
    double cum = 0.0;
    std::size_t keep = 0;
    while (keep < order.size()) {
        cum += probs[order[keep]];
        ++keep;
        if (cum >= top_p * total) break;
    }
    order.resize(keep);
    return order;
}

namespace {

std::vector<double> softmax(const std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
    for (auto& v : p) v /= z;
    return p;
}

double log_softmax_at(const std::vector<double>& logits, std::size_t k) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - m);
    return logits[k] - m - std::log(z);
}

}  // namespace

Generated generate(NextTokenModel& model, const SamplingConfig& cfg, num::Rng& rng) {
    cfg.validate();
    const std::size_t limit = std::min(cfg.max_codes.value_or(model.max_codes()), model.max_codes());
    const auto bos = static_cast<std::size_t>(model.bos()), eos = static_cast<std::size_t>(model.eos());
    Generated g;
    std::vector<double> logits = model.start();
    for (;;) {
        for (double v : logits) {
            if (!std::isfinite(v)) throw NumericError("sampling: non-finite logit at position " + std::to_string(g.codes.size()));
        }
        std::size_t choice;
        if (g.codes.size() >= limit) {
            choice = eos;
        } else {
            std::vector<double> p = softmax(logits);
            p[bos] = 0.0;
            if (g.codes.empty()) p[eos] = 0.0;
            if (cfg.greedy) {
                choice = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
            } else {
                const std::vector<std::size_t> keep = truncation_set(p, cfg.top_p, cfg.min_p);
                std::vector<double> w(keep.size());
                for (std::size_t i = 0; i < keep.size(); ++i) w[i] = p[keep[i]];
                choice = keep[rng.categorical(w)];
            }
        }
        g.log_likelihood += log_softmax_at(logits, choice);
        if (choice == eos) break;
        g.codes.push_back(static_cast<std::int64_t>(choice));
        logits = model.feed(static_cast<std::int64_t>(choice));
    }
    return g;
}

Generated best_of_n(const std::function<Generated()>& draw, std::size_t n) {
    if (n == 0) throw UserError("best_of_n: n must be at least 1");
    Generated best = draw();
    for (std::size_t i = 1; i < n; ++i) {
        Generated g = draw();
        if (g.log_likelihood > best.log_likelihood) best = std::move(g);
    }
    return best;
}

Generated sample(NextTokenModel& model, const SamplingConfig& cfg, num::Rng& rng) {
    return best_of_n([&] { return generate(model, cfg, rng); }, cfg.best_of);
}

}  // namespace flowtok::prior
