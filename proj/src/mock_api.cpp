#include "todsim/mock_api.hpp"

#include <fstream>
#include <set>

#include "httplib.h"
#include "todsim/error.hpp"
#include "todsim/hash.hpp"
#include "todsim/sampling.hpp"

namespace todsim {

void ApiTable::put(const ApiCall& call, ApiResponse response) {
    entries_.insert_or_assign(serialize_call(call), std::move(response));
}

ApiResponse ApiTable::invoke(const ApiCall& call) const {
    const auto it = entries_.find(serialize_call(call));
    return it == entries_.end() ? ApiResponse::failure() : it->second;
}

bool ApiTable::contains(const ApiCall& call) const {
    return entries_.contains(serialize_call(call));
}

ApiTable load_table(std::span<const Episode> episodes) {
    ApiTable table;
    for (const Episode& e : episodes) {
        for (std::size_t i = 0; i + 1 < e.turns.size(); ++i) {
            if (e.turns[i].speaker == Speaker::AssistantCall && e.turns[i + 1].speaker == Speaker::ApiResp) {
                table.put(parse_call(e.turns[i].text), parse_response(e.turns[i + 1].text));
            }
        }
    }
    return table;
}

ApiTable synthesize_table(std::span<const ApiSchema> schemas, std::span<const ApiCall> goals, std::uint64_t seed) {
    std::set<std::string> intents;
    for (const auto& s : schemas) intents.insert(s.intent);

    ApiTable table;
    for (const ApiCall& goal : goals) {
        if (!intents.contains(goal.intent)) throw UnknownIntent(goal.intent);
        // Seeding from the goal's content keeps each payload independent of goal order.
        Rng rng(derive_seed(seed, fnv1a64(serialize_call(goal))));
        SlotMap payload = goal.slots;
        payload["confirmation"] = "C" + std::to_string(100000 + rng.index(900000));
        table.put(goal, ApiResponse::ok(std::move(payload)));
    }
    return table;
}

void save_table(const ApiTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& [call, response] : table.entries()) {
        out << nlohmann::json{{"call", call}, {"response", serialize_response(response)}}.dump() << '\n';
    }
}

ApiTable load_table_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    ApiTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            table.put(parse_call(j.at("call").get<std::string>()),
                      parse_response(j.at("response").get<std::string>()));
        } catch (const std::exception& e) {
            throw ParseError(line_no, std::string(path.string()) + ": " + e.what());
        }
    }
    return table;
}

ApiServer::ApiServer(std::shared_ptr<const ApiTable> table)
    : table_(std::move(table)), server_(std::make_unique<httplib::Server>()) {
    server_->Post("/invoke", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            const ApiCall call = parse_call(req.body);
            res.set_content(serialize_response(table_->invoke(call)), "text/plain");
        } catch (const ParseError& e) {
            res.status = 400;
            res.set_content(e.what(), "text/plain");
        }
    });
}

ApiServer::~ApiServer() {
    stop();
}

int ApiServer::start(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void ApiServer::listen(const std::string& host, int port) {
    if (!server_->listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void ApiServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace todsim
