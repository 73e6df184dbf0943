#include "todsim/exemplar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "todsim/error.hpp"
#include "todsim/hash.hpp"
#include "todsim/templates.hpp"

namespace todsim {

namespace {

constexpr int kFeatureRepeat = 4;
constexpr std::uint32_t kUnknownToken = std::numeric_limits<std::uint32_t>::max();

void push_feature(std::vector<std::string>& out, const std::string& feature) {
    for (int i = 0; i < kFeatureRepeat; ++i) out.push_back(feature);
}

void append_tokens(std::vector<std::string>& out, std::string_view text) {
    for (auto& t : templates::tokenize(text)) out.push_back(std::move(t));
}

std::vector<std::string> user_content_tokens(const std::vector<Turn>& history) {
    std::vector<std::string> out;
    for (const Turn& t : history) {
        if (t.speaker != Speaker::User) continue;
        for (auto& tok : templates::tokenize(t.text)) {
            if (!templates::is_function_word(tok)) out.push_back(std::move(tok));
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::string entry_key(Role role, const std::vector<std::uint32_t>& context, const std::string& response) {
    std::string key(to_string(role));
    key += '\x1f';
    for (auto id : context) {
        key += std::to_string(id);
        key += ',';
    }
    key += '\x1f';
    key += response;
    return key;
}

}  // namespace

std::uint32_t ExemplarStore::intern(const std::string& token) {
    if (const auto it = ids_.find(token); it != ids_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(vocab_.size());
    vocab_.push_back(token);
    ids_.emplace(token, id);
    return id;
}

std::vector<std::uint32_t> ExemplarStore::encode(const std::vector<std::string>& tokens) const {
    std::vector<std::uint32_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) {
        const auto it = ids_.find(t);
        out.push_back(it == ids_.end() ? kUnknownToken : it->second);
    }
    std::sort(out.begin(), out.end());
    return out;
}

void ExemplarStore::add(Role role, const std::vector<std::string>& context, const std::string& response,
                        std::uint64_t weight) {
    if (weight == 0) return;
    std::vector<std::uint32_t> ids;
    ids.reserve(context.size());
    for (const auto& t : context) ids.push_back(intern(t));
    std::sort(ids.begin(), ids.end());
    std::string key = entry_key(role, ids, response);
    if (const auto it = index_.find(key); it != index_.end()) {
        entries_[it->second].weight += weight;
        return;
    }
    index_.emplace(std::move(key), entries_.size());
    entries_.push_back(ExemplarEntry{role, std::move(ids), response, weight});
}

void ExemplarStore::add_call_evidence(const std::vector<std::string>& user_tokens, const ApiCall& call,
                                      std::uint64_t weight) {
    for (const auto& t : user_tokens) lexicon_[t][call.intent] += weight;
    auto& slots = intent_slots_[call.intent];
    for (const auto& [slot, value] : call.slots) slots.insert(slot);
}

std::optional<std::string> ExemplarStore::infer_intent(const std::vector<std::string>& tokens) const {
    std::map<std::string, double> votes;
    for (const auto& t : tokens) {
        const auto it = lexicon_.find(t);
        if (it == lexicon_.end()) continue;
        double total = 0;
        for (const auto& [intent, n] : it->second) total += static_cast<double>(n);
        for (const auto& [intent, n] : it->second) votes[intent] += static_cast<double>(n) / total;
    }
    std::optional<std::string> best;
    double best_score = 0;
    for (const auto& [intent, score] : votes) {
        if (!best || score > best_score) {
            best = intent;
            best_score = score;
        }
    }
    return best;
}

const std::set<std::string>* ExemplarStore::slots_of(const std::string& intent) const {
    const auto it = intent_slots_.find(intent);
    return it == intent_slots_.end() ? nullptr : &it->second;
}

std::uint64_t ExemplarStore::total_weight() const noexcept {
    std::uint64_t total = 0;
    for (const auto& e : entries_) total += e.weight;
    return total;
}

nlohmann::json ExemplarStore::to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : entries_) {
        nlohmann::json ctx = nlohmann::json::array();
        for (auto id : e.context) ctx.push_back(vocab_[id]);
        entries.push_back({{"role", to_string(e.role)}, {"context", ctx}, {"response", e.response}, {"weight", e.weight}});
    }
    nlohmann::json slots = nlohmann::json::object();
    for (const auto& [intent, names] : intent_slots_) slots[intent] = names;
    return {{"version", 1}, {"entries", entries}, {"lexicon", lexicon_}, {"intent_slots", slots}};
}

ExemplarStore ExemplarStore::from_json(const nlohmann::json& j) {
    ExemplarStore store;
    try {
        for (const auto& e : j.at("entries")) {
            store.add(role_from_string(e.at("role").get<std::string>()), e.at("context").get<std::vector<std::string>>(),
                      e.at("response").get<std::string>(), e.at("weight").get<std::uint64_t>());
        }
        store.lexicon_ = j.at("lexicon").get<decltype(lexicon_)>();
        store.intent_slots_ = j.at("intent_slots").get<decltype(intent_slots_)>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("malformed exemplar store: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(0, std::string("malformed exemplar store: ") + e.what());
    }
    return store;
}

void ExemplarStore::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json().dump() << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

ExemplarStore ExemplarStore::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(e.byte, std::string("exemplar store is not JSON: ") + e.what());
    }
    return from_json(j);
}

double multiset_jaccard(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t i = 0, j = 0, inter = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j]) {
            ++i;
        } else if (b[j] < a[i]) {
            ++j;
        } else {
            if (a[i] != kUnknownToken) ++inter;
            ++i;
            ++j;
        }
    }
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

std::vector<std::string> assistant_context(const std::vector<Turn>& history, bool schema_aware,
                                           const std::optional<std::set<std::string>>& required_slots) {
    std::vector<std::string> out;
    const bool after_response = !history.empty() && history.back().speaker == Speaker::ApiResp;
    if (after_response) {
        const auto resp = history::response_in_last_round(history);
        push_feature(out, resp && !resp->is_failure() ? "<phase:ok>" : "<phase:fail>");
    } else {
        push_feature(out, "<phase:user>");
    }
    if (schema_aware) push_feature(out, "<schema>");
    if (!required_slots) {
        push_feature(out, "<slots:unknown>");
    } else {
        const SlotMap informed = history::user_informs(history);
        const bool complete = std::all_of(required_slots->begin(), required_slots->end(),
                                          [&](const std::string& s) { return informed.contains(s); });
        push_feature(out, complete ? "<slots:complete>" : "<slots:missing>");
    }
    if (!history::calls_made(history).empty()) push_feature(out, "<called>");
    if (const auto u = history::last_index(history, Speaker::User)) append_tokens(out, history[*u].text);
    return out;
}

std::vector<std::string> user_context(const std::vector<Turn>& history, const ApiCall& goal) {
    std::vector<std::string> out;
    if (history.empty()) {
        push_feature(out, "<first>");
    } else if (const auto resp = history::response_in_last_round(history)) {
        push_feature(out, resp->is_failure() ? "<phase:fail>" : "<phase:ok>");
    } else {
        push_feature(out, "<phase:utt>");
    }
    const SlotMap revealed = history::user_informs(history);
    const bool all = std::all_of(goal.slots.begin(), goal.slots.end(),
                                 [&](const auto& kv) { return revealed.contains(kv.first); });
    push_feature(out, all ? "<revealed:all>" : "<revealed:some>");
    const std::string last = history::last_assistant_utterance(history);
    if (const auto asked = templates::parse_request(last)) {
        push_feature(out, goal.slots.contains(*asked) ? "<asked:goal>" : "<asked:other>");
    }
    append_tokens(out, last);
    return out;
}

void train_exemplar(ExemplarStore& store, const Episode& episode, TrainRole role, bool schema_aware,
                    std::uint64_t weight) {
    const bool user = role != TrainRole::Assistant;
    const bool assistant = role != TrainRole::User;
    std::optional<ApiCall> goal;
    if (episode.goal) goal = *episode.goal;
    std::optional<std::set<std::string>> required;
    if (goal) required = schema_of(*goal).slot_names;

    std::vector<Turn> prefix;
    prefix.reserve(episode.turns.size());
    for (const Turn& t : episode.turns) {
        if (t.speaker == Speaker::User && user && goal) {
            store.add(Role::User, user_context(prefix, *goal), t.text, weight);
        } else if ((t.speaker == Speaker::AssistantCall || t.speaker == Speaker::AssistantUtt) && assistant) {
            store.add(Role::Assistant, assistant_context(prefix, schema_aware, required), t.text, weight);
            if (t.speaker == Speaker::AssistantCall) {
                try {
                    store.add_call_evidence(user_content_tokens(prefix), parse_call(t.text), weight);
                } catch (const ParseError&) {
                }
            }
        }
        prefix.push_back(t);
    }
}

ExemplarStore train_exemplar(ExemplarStore store, std::span<const Episode> episodes, TrainRole role,
                             bool schema_aware) {
    for (const Episode& e : episodes) train_exemplar(store, e, role, schema_aware);
    return store;
}

ExemplarAgent::ExemplarAgent(std::shared_ptr<const ExemplarStore> store, Role role, ExemplarOptions options)
    : store_(std::move(store)), role_(role), options_(options) {
    if (!store_) throw std::invalid_argument("exemplar agent needs a store");
}

std::optional<std::string> ExemplarAgent::current_intent(const std::vector<Turn>& history) const {
    if (schema_) return schema_->intent;
    return store_->infer_intent(user_content_tokens(history));
}

std::optional<std::set<std::string>> ExemplarAgent::required_slots(const std::optional<std::string>& intent) const {
    if (schema_) return schema_->slot_names;
    if (!intent) return std::nullopt;
    if (const auto* slots = store_->slots_of(*intent)) return *slots;
    return std::nullopt;
}

std::string ExemplarAgent::realize_assistant(const std::string& response, const std::vector<Turn>& history) const {
    const auto intent = current_intent(history);
    const auto required = required_slots(intent);
    const SlotMap informed = history::user_informs(history);

    if (looks_like_call(response)) {
        ApiCall tmpl;
        try {
            tmpl = parse_call(response);
        } catch (const ParseError&) {
            return response;
        }
        ApiCall call{intent ? *intent : tmpl.intent, {}};
        std::set<std::string> names = required ? *required : schema_of(tmpl).slot_names;
        for (const auto& slot : names) {
            if (const auto it = informed.find(slot); it != informed.end()) call.slots.emplace(slot, it->second);
        }
        return serialize_call(call);
    }
    if (templates::parse_request(response) && required) {
        for (const auto& slot : *required) {
            if (!informed.contains(slot)) return templates::request(slot);
        }
    }
    return response;
}

std::string ExemplarAgent::realize_user(const std::string& response, const std::vector<Turn>& history) const {
    if (!goal_ || response == kDoneToken) return response;
    const SlotMap revealed = history::user_informs(history);
    const auto asked = templates::parse_request(history::last_assistant_utterance(history));
    const bool asked_in_goal = asked && goal_->slots.contains(*asked);
    const auto fallback = [&] {
        return goal_->slots.empty() ? templates::want(goal_->intent) : std::string(templates::kProceed);
    };

    if (const auto n = templates::parse_informs(response).size(); n > 0) {
        std::vector<std::string> slots;
        if (asked_in_goal) slots.push_back(*asked);
        for (const auto& [slot, value] : goal_->slots) {
            if (slots.size() >= n) break;
            if (!revealed.contains(slot) && !(asked && slot == *asked)) slots.push_back(slot);
        }
        if (slots.empty()) return fallback();
        std::string out;
        for (const auto& s : slots) {
            if (!out.empty()) out += ' ';
            out += templates::inform(s, goal_->slots.at(s));
        }
        return out;
    }
    if (templates::parse_dont_care(response)) {
        if (asked && !asked_in_goal) return templates::dont_care(*asked);
        if (asked_in_goal) return templates::inform(*asked, goal_->slots.at(*asked));
        return fallback();
    }
    if (templates::parse_want(response)) return templates::want(goal_->intent);
    return response;
}

std::vector<std::pair<std::string, double>> ExemplarAgent::distribution(const Observation& obs) {
    if (obs.grounding) {
        try {
            if (role_ == Role::User) {
                goal_ = parse_call(*obs.grounding);
            } else {
                schema_ = parse_schema(*obs.grounding);
            }
        } catch (const ParseError& e) {
            throw MalformedGrounding(std::string("exemplar agent grounding: ") + e.what());
        }
    }
    if (role_ == Role::User && !goal_) throw MalformedGrounding("exemplar user has no goal");

    const auto& history = obs.history;
    const bool after_response = !history.empty() && history.back().speaker == Speaker::ApiResp;
    std::vector<std::string> context;
    if (role_ == Role::User) {
        context = user_context(history, *goal_);
    } else {
        context = assistant_context(history, schema_.has_value(), required_slots(current_intent(history)));
    }
    const auto query = store_->encode(context);

    struct Candidate {
        std::size_t index;
        double score;
    };
    std::vector<Candidate> scored;
    double best = -std::numeric_limits<double>::infinity();
    const auto entries = store_->entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.role != role_) continue;
        if (role_ == Role::Assistant && after_response && looks_like_call(e.response)) continue;
        const double s = std::log(static_cast<double>(e.weight)) + options_.sharpness * multiset_jaccard(query, e.context);
        scored.push_back({i, s});
        best = std::max(best, s);
    }
    if (scored.empty()) throw AgentUnavailable("exemplar store has no " + std::string(to_string(role_)) + " exemplars");

    const double cutoff = std::log(options_.prune);
    std::vector<std::pair<std::string, double>> dist;
    std::map<std::string, std::size_t> position;  // realized text -> index in dist
    std::map<std::string, std::string> realized;  // response template -> realized text
    double total = 0;
    for (const auto& c : scored) {
        if (c.score - best < cutoff) continue;
        const double w = std::exp(c.score - best);
        const std::string& response = entries[c.index].response;
        auto r = realized.find(response);
        if (r == realized.end()) {
            r = realized
                    .emplace(response, role_ == Role::User ? realize_user(response, history)
                                                           : realize_assistant(response, history))
                    .first;
        }
        const auto [pos, inserted] = position.emplace(r->second, dist.size());
        if (inserted) dist.emplace_back(r->second, 0.0);
        dist[pos->second].second += w;
        total += w;
    }
    for (auto& [text, p] : dist) p /= total;
    return dist;
}

std::string ExemplarAgent::act(const Observation& obs) {
    if (!rng_) rng_.emplace(derive_seed(obs.decode.seed, fnv1a64("exemplar"), static_cast<int>(role_)));
    const auto dist = distribution(obs);
    if (obs.decode.mode == DecodeMode::Greedy) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < dist.size(); ++i) {
            if (dist[i].second > dist[arg].second) arg = i;
        }
        return dist[arg].first;
    }
    const auto kept = nucleus_filter(dist, obs.decode.p);
    std::vector<double> probs;
    probs.reserve(kept.size());
    for (const auto& [text, p] : kept) probs.push_back(p);
    return kept[sample_index(probs, *rng_)].first;
}

AgentFactory exemplar_factory(std::shared_ptr<const ExemplarStore> store, Role role, ExemplarOptions options) {
    return [store = std::move(store), role, options] { return std::make_unique<ExemplarAgent>(store, role, options); };
}

}  // namespace todsim
