#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "dtf/matlib.hpp"

// HTTP facade over the library, engine and designer. Request handling is a
// pure function of (request, library snapshot); the only shared mutable
// state is the snapshot pointer, swapped whole on each contribution.
//
// JSON field names are frozen in docs/openapi.yaml.
namespace dtf::service {

struct Request {
    std::string method;  // GET | POST
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
    std::string content_type;
};

struct Response {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

class Service {
public:
    // `contributions` is the append-only JSONL log; empty disables it.
    explicit Service(MaterialLibrary lib, std::filesystem::path contributions = {});

    Response handle(const Request& req);

    std::shared_ptr<const MaterialLibrary> snapshot() const;

private:
    Response contribute(const Request& req);

    mutable std::mutex mu_;
    std::shared_ptr<const MaterialLibrary> lib_;
    std::filesystem::path log_;
};

// Replays a contributions log onto `base`; malformed or conflicting lines
// are skipped. Returns the number applied.
std::size_t replay_contributions(MaterialLibrary& base, const std::filesystem::path& log);

// Runs an HTTP server on a background thread.
class Server {
public:
    explicit Server(Service& svc);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds and starts listening; port 0 picks a free port. Returns the
    // bound port, or -1 on failure.
    int start(const std::string& host, int port);
    void stop();
    // Blocks until the server stops.
    void wait();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace dtf::service
