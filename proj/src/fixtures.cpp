#include "todsim/fixtures.hpp"

#include <array>

#include "todsim/hash.hpp"
#include "todsim/orchestrator.hpp"
#include "todsim/sampling.hpp"
#include "todsim/scripted_agents.hpp"

namespace todsim {

namespace {

constexpr std::array<std::string_view, 48> kWords = {
    "amber",  "birch",  "cedar",  "delta",  "ember",  "fjord",  "garnet", "harbor", "indigo", "juniper",
    "kestrel", "lagoon", "maple",  "nectar", "onyx",   "prairie", "quartz", "raven",  "sierra", "tundra",
    "umber",  "violet", "willow", "xenon",  "yarrow", "zephyr", "aspen",  "basalt", "coral",  "dune",
    "elm",    "flint",  "glade",  "heath",  "iris",   "jade",   "kelp",   "lotus",  "meadow", "north",
    "olive",  "pebble", "quill",  "ridge",  "sage",   "thistle", "upland", "vale"};

}  // namespace

std::vector<DomainSpec> standard_domains() {
    return {
        {"Flights",
         {{"SearchFlight", {"flight_origin", "flight_destination", "flight_date"}},
          {"ReserveFlight", {"seat_flight", "seat_count"}}}},
        {"Restaurants",
         {{"FindRestaurant", {"restaurant_cuisine", "restaurant_city"}},
          {"ReserveTable", {"table_time", "table_party", "table_venue"}}}},
        {"Hotels",
         {{"SearchHotel", {"hotel_city", "hotel_stars"}},
          {"ReserveRoom", {"room_checkin", "room_nights", "room_guests"}}}},
        {"Movies",
         {{"FindMovie", {"movie_genre", "movie_city"}}, {"BuyTicket", {"ticket_movie", "ticket_count"}}}},
        {"Music", {{"PlaySong", {"song_title", "song_artist"}}, {"FindAlbum", {"album_genre", "album_year"}}}},
        {"Weather",
         {{"GetForecast", {"forecast_city", "forecast_days"}}, {"GetAirQuality", {"air_city", "air_date"}}}},
        {"Events",
         {{"FindEvent", {"event_category", "event_city"}},
          {"BuyEventTicket", {"pass_event", "pass_count", "pass_date"}}}},
        {"Banks",
         {{"CheckBalance", {"balance_account", "balance_owner"}},
          {"OpenAccount", {"opening_type", "opening_branch"}}}},
        {"Home Search",
         {{"FindHome", {"home_area", "home_bedrooms"}}, {"ScheduleVisit", {"visit_property", "visit_date"}}}},
        {"Messaging",
         {{"SendMessage", {"message_contact", "message_text"}},
          {"ShareLocation", {"location_contact", "location_place"}}}},
        {"Payment",
         {{"MakePayment", {"payment_receiver", "payment_amount", "payment_method"}},
          {"RequestPayment", {"request_sender", "request_amount"}}}},
        {"Rental Cars",
         {{"FindCar", {"car_city", "car_pickup", "car_type"}},
          {"ReserveCar", {"reservation_car", "reservation_days"}}}},
    };
}

std::vector<DomainSpec> extra_domains() {
    return {
        {"Dentists",
         {{"FindDentist", {"dentist_city", "dentist_insurance"}},
          {"BookCheckup", {"checkup_date", "checkup_dentist"}}}},
        {"Salons",
         {{"FindSalon", {"salon_city", "salon_service"}}, {"BookStyling", {"styling_time", "styling_stylist"}}}},
        {"Buses",
         {{"FindBus", {"bus_origin", "bus_destination"}}, {"BuyBusTicket", {"busticket_date", "busticket_riders"}}}},
        {"Trains",
         {{"FindTrain", {"train_from", "train_to"}}, {"BuyTrainTicket", {"railpass_class", "railpass_date"}}}},
        {"Libraries", {{"FindBook", {"book_title", "book_author"}}, {"RenewLoan", {"loan_card", "loan_weeks"}}}},
        {"Gyms", {{"FindGym", {"gym_area", "gym_price"}}, {"JoinClass", {"class_name", "class_day"}}}},
        {"Parking",
         {{"FindParking", {"parking_area", "parking_hours"}}, {"ReserveSpot", {"spot_garage", "spot_time"}}}},
        {"Pharmacy",
         {{"FindPharmacy", {"pharmacy_city", "pharmacy_hours"}},
          {"RefillPrescription", {"prescription_id", "prescription_store"}}}},
        {"Travel",
         {{"FindAttraction", {"attraction_city", "attraction_kind"}}, {"BookTour", {"tour_name", "tour_size"}}}},
        {"Doctors",
         {{"FindDoctor", {"doctor_specialty", "doctor_city"}},
          {"BookAppointment", {"appointment_doctor", "appointment_date"}}}},
    };
}

std::vector<std::string> World::intents_of(const std::set<std::string>& domain_names) const {
    std::vector<std::string> out;
    for (const auto& d : domains) {
        if (!domain_names.contains(d.name)) continue;
        for (const auto& i : d.intents) out.push_back(i.intent);
    }
    return out;
}

ApiCall random_goal(const IntentSpec& spec, Rng& rng) {
    ApiCall goal{spec.intent, {}};
    for (const auto& slot : spec.slots) goal.slots[slot] = std::string(kWords[rng.index(kWords.size())]);
    return goal;
}

Episode human_episode(const ApiCall& goal, Rng& rng) {
    const int reveal_k = rng.bernoulli(0.5) ? 1 : 2;
    ScriptedUser user({reveal_k});
    ScriptedAssistant assistant;
    ApiTable api;
    api.put(goal, ApiResponse::ok(goal.slots));
    SimConfig cfg;
    cfg.schema_aware = true;
    cfg.decode = {DecodeMode::Greedy, 1.0, 0};
    Episode ep = run_dialogue(user, assistant, api, goal, schema_of(goal), cfg, 0).episode;
    ep.schema.reset();
    ep.origin = Origin::Human;
    return ep;
}

World make_world(const WorldConfig& config) {
    World world;
    world.domains = config.domains;
    std::vector<ApiCall> goals;
    for (const auto& domain : config.domains) {
        for (const auto& spec : domain.intents) {
            world.schemas.push_back(ApiSchema{spec.intent, {spec.slots.begin(), spec.slots.end()}});
            world.intent_domains[spec.intent] = domain.name;
            Rng rng(derive_seed(config.seed, fnv1a64(spec.intent)));
            const std::array<std::pair<Fold, int>, 3> folds = {
                {{Fold::Train, config.train_per_intent},
                 {Fold::Valid, config.valid_per_intent},
                 {Fold::Test, config.test_per_intent}}};
            for (const auto& [fold, count] : folds) {
                for (int i = 0; i < count; ++i) {
                    const ApiCall goal = random_goal(spec, rng);
                    goals.push_back(goal);
                    Episode ep = human_episode(goal, rng);
                    ep.domain = domain.name;
                    ep.fold = fold;
                    world.human.push_back(std::move(ep));
                }
            }
        }
    }
    world.api = synthesize_table(world.schemas, goals, config.seed);
    // Human transcripts carry the responses of the world's API.
    for (auto& ep : world.human) {
        for (std::size_t i = 0; i + 1 < ep.turns.size(); ++i) {
            if (ep.turns[i].speaker == Speaker::AssistantCall && ep.turns[i + 1].speaker == Speaker::ApiResp) {
                ep.turns[i + 1].text = serialize_response(world.api.invoke(parse_call(ep.turns[i].text)));
            }
        }
    }
    return world;
}

std::vector<ApiCall> goals_of(const World& world, const std::set<std::string>& domains, Fold fold) {
    std::vector<ApiCall> out;
    for (const auto& ep : world.human) {
        if (ep.fold != fold || !domains.contains(ep.domain) || !ep.goal) continue;
        out.push_back(*ep.goal);
    }
    return out;
}

}  // namespace todsim
