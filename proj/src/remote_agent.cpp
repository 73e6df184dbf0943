#include "todsim/remote_agent.hpp"

#include <httplib.h>

#include "todsim/error.hpp"

namespace todsim {

namespace {

// Splits "http://host:port/prefix" into the client origin and the path prefix.
std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme = url.find("://");
    const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
    const auto slash = url.find('/', host_start);
    if (slash == std::string::npos) return {url, ""};
    std::string prefix = url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, slash), prefix};
}

}  // namespace

nlohmann::json build_act_request(const Observation& obs) {
    nlohmann::json history = nlohmann::json::array();
    for (const Turn& t : obs.history) history.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}});
    return {
        {"role", to_string(obs.role)},
        {"grounding", obs.grounding ? nlohmann::json(*obs.grounding) : nlohmann::json(nullptr)},
        {"history", history},
        {"decode", {{"mode", to_string(obs.decode.mode)}, {"p", obs.decode.p}, {"seed", obs.decode.seed}}},
    };
}

std::string remote_act(const std::string& base_url, const Observation& obs, const RemoteOptions& options) {
    const auto [origin, prefix] = split_url(base_url);
    httplib::Client client(origin);
    const auto secs = options.timeout.count() / 1000;
    const auto usecs = (options.timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    const std::string body = build_act_request(obs).dump();
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= options.retries; ++attempt) {
        const auto res = client.Post(prefix + "/act", body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        try {
            return nlohmann::json::parse(res->body).at("utterance").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("malformed reply: ") + e.what();
        }
    }
    throw AgentUnavailable(base_url + ": " + last_error + " after " + std::to_string(options.retries + 1) +
                           " attempts");
}

AgentFactory remote_factory(std::string base_url, RemoteOptions options) {
    return [base_url = std::move(base_url), options] { return std::make_unique<RemoteAgent>(base_url, options); };
}

}  // namespace todsim
