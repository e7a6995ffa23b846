#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <thread>

#include "pollaudit/service.hpp"

int main(int argc, char** argv) {
  CLI::App app{"HTTP API for lookup tables and live audit sessions", "pollaudit-serve"};
  pollaudit::service::ServerOptions server;
  pollaudit::service::ApiOptions api;
  std::string data_dir;
  app.add_option("--host", server.host, "Listen address")->envname("POLLAUDIT_HOST");
  app.add_option("--port", server.port, "Listen port (0 picks a free port)")
      ->envname("POLLAUDIT_PORT")
      ->check(CLI::Range(0, 65535));
  app.add_option("--data-dir", data_dir, "Directory for the session log; empty keeps sessions in memory")
      ->envname("POLLAUDIT_DATA_DIR");
  app.add_option("--origin", server.allowed_origin, "Access-Control-Allow-Origin value")
      ->envname("POLLAUDIT_ORIGIN");
  app.add_option("--threads", server.threads, "Request worker threads")->check(CLI::Range(1u, 256u));
  app.add_option("--table-jobs", api.table_jobs, "Threads per table computation")->check(CLI::Range(1u, 256u));
  app.add_option("--max-ballots", api.max_ballots, "Largest N accepted")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  // Block termination signals in every thread; a dedicated thread waits for
  // them and shuts the server down.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    pollaudit::service::SessionStore store(data_dir.empty() ? std::nullopt
                                                             : std::optional<std::filesystem::path>(data_dir));
    pollaudit::service::ApiHandler handler(store, api);
    pollaudit::service::HttpServer http(handler, server);
    const int port = http.bind();
    std::cerr << "listening on " << server.host << ":" << port;
    if (store.log_path()) std::cerr << " (log " << store.log_path()->string() << ", " << store.size() << " sessions)";
    std::cerr << "\n";

    std::jthread waiter([&] {
      int sig = 0;
      sigwait(&signals, &sig);
      http.stop();
    });
    http.listen();
    // Wake the waiter if the server stopped on its own.
    if (waiter.joinable()) pthread_kill(waiter.native_handle(), SIGTERM);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
