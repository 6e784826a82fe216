// Regenerates the stub fixtures used by the end-to-end tests:
//   stub_fixtures <out-dir>  ->  prompts.jsonl, pairs.jsonl
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <fmt/core.h>
#include <json.hpp>

#include "screening/rng.hpp"
#include "screening/stub_server.hpp"

namespace {

using screening::stub::StubConfig;

/// Argmax continuation of an empty solution until the end token wins.
std::string greedy(const StubConfig& cfg, bool composite) {
    std::string s;
    const auto vocab = screening::stub::vocabulary(cfg);
    while (s.size() < 64) {
        const auto lp = screening::stub::next_log_probs(cfg, s, composite);
        const auto best = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
        if (best + 1 == vocab.size()) break;
        s += vocab[best];
    }
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: stub_fixtures <out-dir>\n";
        return 1;
    }
    const std::filesystem::path dir = argv[1];
    std::filesystem::create_directories(dir);
    const StubConfig cfg;
    const std::string solo = greedy(cfg, false);

    std::ofstream prompts(dir / "prompts.jsonl", std::ios::binary);
    for (int i = 1; i <= 6; ++i) {
        const auto id = fmt::format("p{:02d}", i);
        auto emit = [&](const char* kind, const std::string& prompt, const std::string& correct) {
            nlohmann::ordered_json j;
            j["problem_id"] = id;
            j["kind"] = kind;
            j["prompt"] = prompt;
            j["correct_solutions"] = {correct};
            prompts << j.dump() << '\n';
        };
        emit("standalone_1", fmt::format("### Task\nProblem {} part one.\n### Solution\n", id), solo);
        emit("standalone_2", fmt::format("### Task\nProblem {} part two.\n### Solution\n", id), solo);
        emit("composite",
             fmt::format("### Composite task\nProblem {}: solve part one, then part two.\n### Solution\n", id),
             solo + solo);
    }

    screening::RngStream rng(7, screening::tag("stub-fixture"));
    auto random_solution = [&] {
        const std::size_t len = 15 + rng.below(46);
        std::string s;
        for (std::size_t k = 0; k < len; ++k) s += cfg.alphabet[rng.below(cfg.alphabet.size())];
        return s;
    };
    std::ofstream pairs(dir / "pairs.jsonl", std::ios::binary);
    for (int i = 0; i < 16; ++i) {
        const auto id = fmt::format("pair-{:04d}", i);
        const auto s1 = random_solution(), s2 = random_solution();
        nlohmann::ordered_json j;
        j["pair_id"] = id;
        j["parts"] = nlohmann::ordered_json::array(
            {{{"prompt", fmt::format("### Task\n{} part one.\n### Lengths: {}\n### Solution\n", id, s1.size())},
              {"solution", s1}},
             {{"prompt", fmt::format("### Task\n{} part two.\n### Lengths: {}\n### Solution\n", id, s2.size())},
              {"solution", s2}}});
        j["composite_prompt"] = fmt::format("### Composite task\n{}: both parts.\n### Lengths: {} {}\n### Solution\n",
                                            id, s1.size(), s2.size());
        pairs << j.dump() << '\n';
    }
    std::cout << "greedy standalone solution: " << solo << '\n';
    return 0;
}
