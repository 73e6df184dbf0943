#pragma once

// Client for agents served over HTTP. Wire protocol:
//   POST <base>/act  {role, grounding|null, history: [{speaker, text}], decode: {mode, p, seed}}
//   -> 200 {utterance}
// Any other status, a transport error or a malformed body is retried; after
// the last retry the call fails with AgentUnavailable.

#include <chrono>
#include <string>

#include <nlohmann/json.hpp>

#include "todsim/agent.hpp"

namespace todsim {

struct RemoteOptions {
    std::chrono::milliseconds timeout{30'000};
    int retries = 2;
};

nlohmann::json build_act_request(const Observation& obs);

/// `base_url` is scheme://host[:port] with an optional path prefix.
std::string remote_act(const std::string& base_url, const Observation& obs, const RemoteOptions& options = {});

class RemoteAgent : public Agent {
public:
    RemoteAgent(std::string base_url, RemoteOptions options = {})
        : base_url_(std::move(base_url)), options_(options) {}
    std::string act(const Observation& obs) override { return remote_act(base_url_, obs, options_); }

private:
    std::string base_url_;
    RemoteOptions options_;
};

AgentFactory remote_factory(std::string base_url, RemoteOptions options = {});

}  // namespace todsim
