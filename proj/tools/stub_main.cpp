#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "screening/errors.hpp"
#include "screening/stub_server.hpp"

namespace {
std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }
}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic OpenAI-compatible completions stub", "screening-stub"};
    screening::stub::StubConfig cfg;
    bool no_echo = false;
    app.add_option("--host", cfg.host, "Bind address")->capture_default_str();
    app.add_option("--port", cfg.port, "Port (0 picks a free one)")->capture_default_str();
    app.add_option("--alphabet", cfg.alphabet, "Solution characters")->capture_default_str();
    app.add_option("--solution-len", cfg.solution_len, "Standalone solution length")->capture_default_str();
    app.add_option("--bias", cfg.bias, "Logit bonus of the preferred character")->capture_default_str();
    app.add_option("--noise", cfg.noise_amplitude, "Composite noise amplitude")->capture_default_str();
    app.add_option("--fail-first", cfg.fail_first, "Answer the first N requests with 503");
    app.add_option("--rate-limit-first", cfg.rate_limit_first, "Answer the next N requests with 429");
    app.add_flag("--no-echo", no_echo, "Reject echo requests");
    CLI11_PARSE(app, argc, argv);
    cfg.echo_supported = !no_echo;

    try {
        screening::stub::StubServer server(cfg);
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        server.start();
        std::cout << "listening on " << server.base_url() << std::endl;
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        server.stop();
    } catch (const screening::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
