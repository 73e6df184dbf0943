#include "todsim/data_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "todsim/error.hpp"

namespace todsim {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(e.byte, path.string() + ": " + e.what());
    }
}

}  // namespace

std::vector<Episode> parse_episodes(std::string_view text) {
    std::vector<Episode> out;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        const std::string line = trim(text.substr(start, end - start));
        start = end + 1;
        if (line.empty()) continue;
        try {
            out.push_back(episode_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, e.what());
        } catch (const ParseError& e) {
            throw ParseError(line_no, e.reason());
        } catch (const std::invalid_argument& e) {
            throw ParseError(line_no, e.what());
        }
    }
    return out;
}

std::string format_episodes(std::span<const Episode> episodes) {
    std::string out;
    for (const auto& e : episodes) {
        out += to_jsonl_line(e);
        out += '\n';
    }
    return out;
}

std::vector<Episode> load_episodes(const std::filesystem::path& path) {
    return parse_episodes(read_file(path));
}

void write_episodes(const std::filesystem::path& path, std::span<const Episode> episodes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << format_episodes(episodes);
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Episode>& FoldedEpisodes::operator[](Fold f) {
    return f == Fold::Train ? train : f == Fold::Valid ? valid : test;
}

const std::vector<Episode>& FoldedEpisodes::operator[](Fold f) const {
    return f == Fold::Train ? train : f == Fold::Valid ? valid : test;
}

std::vector<Episode> FoldedEpisodes::all() const {
    std::vector<Episode> out = train;
    out.insert(out.end(), valid.begin(), valid.end());
    out.insert(out.end(), test.begin(), test.end());
    return out;
}

DomainSplit split_by_domain(std::span<const Episode> episodes, const std::set<std::string>& holdout) {
    DomainSplit split;
    split.holdout_domains = holdout;
    for (const auto& e : episodes) {
        bool ood = false;
        for (const auto& d : domain_labels(e)) ood = ood || holdout.contains(d);
        (ood ? split.out_of_domain : split.in_domain)[e.fold].push_back(e);
    }
    return split;
}

GoalExtraction extract_goals(std::span<const Episode> episodes, const std::vector<ApiSchema>* schemas) {
    GoalExtraction out;
    std::set<std::string> known;
    if (schemas) {
        for (const auto& s : *schemas) known.insert(s.intent);
    }
    for (const auto& e : episodes) {
        std::optional<ApiCall> goal;
        bool multi = false;
        for (const auto& t : e.turns) {
            if (t.speaker != Speaker::AssistantCall) continue;
            ApiCall call;
            try {
                call = parse_call(t.text);
            } catch (const ParseError&) {
                continue;
            }
            if (!goal) {
                goal = call;
            } else if (!calls_equal(*goal, call)) {
                multi = true;
            }
        }
        if (multi) {
            ++out.skipped_multi_goal;
        } else if (!goal) {
            ++out.skipped_no_call;
        } else if (schemas && !known.contains(goal->intent)) {
            ++out.skipped_unknown_schema;
        } else {
            out.goals.push_back(*goal);
        }
    }
    return out;
}

std::vector<ApiSchema> schemas_of(std::span<const ApiCall> goals) {
    std::map<std::string, std::set<std::string>> slots;
    for (const auto& g : goals) {
        auto& s = slots[g.intent];
        for (const auto& [name, value] : g.slots) s.insert(name);
    }
    std::vector<ApiSchema> out;
    for (auto& [intent, names] : slots) out.push_back({intent, std::move(names)});
    return out;
}

std::vector<Episode> import_sgd_like(const std::filesystem::path& schema_file,
                                     std::span<const std::filesystem::path> dialogue_files,
                                     std::vector<ApiSchema>* schemas_out) {
    std::map<std::string, ApiSchema> intents;
    std::map<std::string, std::string> service_domain;
    const auto schema_json = read_json(schema_file);
    try {
        for (const auto& service : schema_json) {
            const auto name = service.at("service_name").get<std::string>();
            service_domain[name] = service.value("domain", name);
            for (const auto& intent : service.at("intents")) {
                ApiSchema s{intent.at("name").get<std::string>(), {}};
                for (const auto& slot : intent.at("slots")) s.slot_names.insert(slot.get<std::string>());
                intents[s.intent] = s;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, schema_file.string() + ": " + e.what());
    }
    if (schemas_out) {
        schemas_out->clear();
        for (const auto& [name, s] : intents) schemas_out->push_back(s);
    }

    std::vector<std::filesystem::path> files(dialogue_files.begin(), dialogue_files.end());
    std::sort(files.begin(), files.end());
    std::vector<Episode> out;
    for (const auto& file : files) {
        const auto dialogues = read_json(file);
        try {
            for (const auto& d : dialogues) {
                const auto id = d.at("dialogue_id").get<std::string>();
                Episode ep;
                ep.origin = Origin::Human;
                ep.fold = fold_from_string(d.value("fold", std::string("Train")));
                std::vector<std::string> domains;
                for (const auto& svc : d.at("services")) {
                    const auto name = svc.get<std::string>();
                    const auto it = service_domain.find(name);
                    domains.push_back(it == service_domain.end() ? name : it->second);
                }
                for (const auto& dom : domains) ep.domain += (ep.domain.empty() ? "" : ",") + dom;

                for (const auto& t : d.at("turns")) {
                    const auto speaker = t.at("speaker").get<std::string>();
                    const auto text = t.at("utterance").get<std::string>();
                    if (speaker == "USER") {
                        ep.turns.push_back({Speaker::User, text});
                        continue;
                    }
                    if (speaker != "SYSTEM") throw SchemaMismatch(id + ": unknown speaker " + speaker);
                    if (t.contains("service_call")) {
                        const auto& sc = t.at("service_call");
                        ApiCall call{sc.at("method").get<std::string>(), {}};
                        const auto schema = intents.find(call.intent);
                        if (schema == intents.end()) throw SchemaMismatch(id + ": unknown intent " + call.intent);
                        for (const auto& [slot, value] : sc.at("parameters").items()) {
                            if (!schema->second.slot_names.contains(slot)) {
                                throw SchemaMismatch(id + ": intent " + call.intent + " has no slot " + slot);
                            }
                            call.slots[slot] = value.get<std::string>();
                        }
                        ApiResponse resp = ApiResponse::failure();
                        if (t.contains("service_results") && !t.at("service_results").empty()) {
                            SlotMap payload;
                            for (const auto& [k, v] : t.at("service_results").at(0).items()) {
                                payload[k] = v.is_string() ? v.get<std::string>() : v.dump();
                            }
                            resp = ApiResponse::ok(std::move(payload));
                        }
                        ep.turns.push_back({Speaker::AssistantCall, serialize_call(call)});
                        ep.turns.push_back({Speaker::ApiResp, serialize_response(resp)});
                    }
                    ep.turns.push_back({Speaker::AssistantUtt, text});
                }
                if (const auto bad = check_turn_cycle(ep.turns)) throw SchemaMismatch(id + ": " + *bad);
                const auto goals = extract_goals(std::span<const Episode>(&ep, 1));
                if (goals.goals.size() == 1) {
                    ep.goal = goals.goals.front();
                    ep.success = recompute_success(ep);
                }
                out.push_back(std::move(ep));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(0, file.string() + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw SchemaMismatch(file.string() + ": " + e.what());
        }
    }
    return out;
}

}  // namespace todsim
