#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "todsim/dialogue.hpp"

namespace httplib {
class Server;
}

namespace todsim {

/// Exact-match lookup table from fully realized calls to responses. Keys are
/// canonical serializations, so probes are insensitive to slot order and to
/// whitespace around values. Immutable once built; safe for concurrent reads.
class ApiTable {
public:
    ApiTable() = default;

    /// Inserts or overwrites (last write wins).
    void put(const ApiCall& call, ApiResponse response);

    /// Stored response on a hit, the failure sentinel on a miss.
    ApiResponse invoke(const ApiCall& call) const;
    bool contains(const ApiCall& call) const;

    std::size_t size() const noexcept { return entries_.size(); }
    const std::map<std::string, ApiResponse>& entries() const noexcept { return entries_; }

    friend bool operator==(const ApiTable&, const ApiTable&) = default;

private:
    std::map<std::string, ApiResponse> entries_;
};

/// Every (AssistantCall, following ApiResp) pair becomes an entry.
ApiTable load_table(std::span<const Episode> episodes);

/// Deterministic per seed: each goal maps to a payload that echoes its slots
/// plus a generated confirmation code. Throws UnknownIntent when a goal's
/// intent has no schema.
ApiTable synthesize_table(std::span<const ApiSchema> schemas, std::span<const ApiCall> goals, std::uint64_t seed);

/// JSON Lines of {"call": ..., "response": ...}.
void save_table(const ApiTable& table, const std::filesystem::path& path);
ApiTable load_table_file(const std::filesystem::path& path);

/// `POST /invoke` with a serialized call as the plain-text body; replies 200
/// with the serialized response (the sentinel is in-band) or 400 when the
/// body does not parse.
class ApiServer {
public:
    explicit ApiServer(std::shared_ptr<const ApiTable> table);
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds (port 0 picks a free port) and serves on a background thread.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    /// Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

private:
    std::shared_ptr<const ApiTable> table_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace todsim
