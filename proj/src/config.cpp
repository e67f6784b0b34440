#include "secgrid/config.hpp"

#include <charconv>
#include <sstream>

namespace secgrid {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw std::invalid_argument("bad integer for '" + key + "': " + v);
    return out;
}

std::int64_t parse_i64(const std::string& v, const std::string& key) {
    std::int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw std::invalid_argument("bad integer for '" + key + "': " + v);
    return out;
}

std::vector<std::string> split(const std::string& v, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) parts.push_back(item);
    }
    return parts;
}

// "1020-1260,300-360" -> minute ranges
std::vector<std::pair<std::uint32_t, std::uint32_t>> parse_windows(const std::string& v,
                                                                   const std::string& key) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    for (const auto& part : split(v, ',')) {
        auto dash = part.find('-');
        if (dash == std::string::npos) throw std::invalid_argument("bad range in '" + key + "'");
        out.emplace_back(
            static_cast<std::uint32_t>(parse_u64(trim(part.substr(0, dash)), key)),
            static_cast<std::uint32_t>(parse_u64(trim(part.substr(dash + 1)), key)));
    }
    return out;
}

}  // namespace

ScenarioConfig parse_scenario_config(std::string_view text) {
    ScenarioConfig cfg;
    std::string line;
    std::stringstream in{std::string(text)};
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected key = value");
        std::string key = trim(trimmed.substr(0, eq));
        std::string value = trim(trimmed.substr(eq + 1));

        if (key == "meters") cfg.meters = static_cast<std::uint32_t>(parse_u64(value, key));
        else if (key == "periods") cfg.periods = static_cast<std::uint32_t>(parse_u64(value, key));
        else if (key == "report_interval")
            cfg.report_interval = static_cast<std::uint32_t>(parse_u64(value, key));
        else if (key == "min_reading") cfg.min_reading = parse_u64(value, key);
        else if (key == "max_reading") cfg.max_reading = parse_u64(value, key);
        else if (key == "init_start") cfg.init_start = static_cast<std::uint32_t>(parse_u64(value, key));
        else if (key == "init_spacing")
            cfg.init_spacing = static_cast<std::uint32_t>(parse_u64(value, key));
        else if (key == "first_report_offset")
            cfg.first_report_offset = static_cast<std::uint32_t>(parse_u64(value, key));
        else if (key == "drain") cfg.drain = static_cast<std::uint32_t>(parse_u64(value, key));
        else if (key == "periods_per_day")
            cfg.periods_per_day = static_cast<std::uint32_t>(parse_u64(value, key));
        else if (key == "tariff") cfg.tariff = value;
        else if (key == "timing.retry_interval")
            cfg.timing.retry_interval = static_cast<std::uint32_t>(parse_u64(value, key));
        else if (key == "timing.retry_max")
            cfg.timing.retry_max = static_cast<std::uint32_t>(parse_u64(value, key));
        else if (key == "timing.time_tolerance")
            cfg.timing.time_tolerance = static_cast<std::uint32_t>(parse_u64(value, key));
        else if (key == "timing.window_close_offset")
            cfg.timing.window_close_offset = static_cast<std::uint32_t>(parse_u64(value, key));
        else if (key == "tou.price") cfg.tou.price = parse_u64(value, key);
        else if (key == "tou.surcharge") cfg.tou.peak_surcharge = parse_u64(value, key);
        else if (key == "tou.peak") cfg.tou.peak_windows = parse_windows(value, key);
        else if (key == "cpp.days") {
            // "3:80,5:120" => event day -> surcharge override of the base tariff
            for (const auto& part : split(value, ',')) {
                auto colon = part.find(':');
                if (colon == std::string::npos)
                    throw std::invalid_argument("cpp.days entries are day:surcharge");
                std::uint64_t day = parse_u64(trim(part.substr(0, colon)), key);
                TouParams override_params = cfg.tou;
                override_params.peak_surcharge = parse_u64(trim(part.substr(colon + 1)), key);
                cfg.cpp.event_days[day] = override_params;
            }
        } else if (key == "rtp.m0") cfg.rtp_m0 = parse_u64(value, key);
        else if (key == "rtp.a") cfg.rtp_a = parse_u64(value, key);
        else if (key == "rtp.b") cfg.rtp_b = parse_u64(value, key);
        else if (key == "rtp.k") {
            auto parts = split(value, ',');
            if (parts.size() != 3) throw std::invalid_argument("rtp.k needs three milli-weights");
            cfg.rtp_k.k1_milli = parse_u64(parts[0], key);
            cfg.rtp_k.k2_milli = parse_u64(parts[1], key);
            cfg.rtp_k.k3_milli = parse_u64(parts[2], key);
        } else if (key == "sts.phi") {
            cfg.sts.phi_milli.clear();
            for (const auto& part : split(value, ',')) cfg.sts.phi_milli.push_back(parse_u64(part, key));
        } else if (key == "sts.sigma") cfg.sts.sigma_milli = parse_u64(value, key);
        else
            throw std::invalid_argument("unknown config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

std::optional<MsgType> msg_type_from_name(std::string_view name) {
    for (std::uint8_t t = 1; is_known_msg_type(t); ++t) {
        if (msg_type_name(static_cast<MsgType>(t)) == name) return static_cast<MsgType>(t);
    }
    return std::nullopt;
}

AdversaryScript parse_adversary_script(std::string_view text) {
    AdversaryScript script;
    std::string line;
    std::stringstream in{std::string(text)};
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::string trimmed = trim(line);
        if (trimmed.empty()) continue;

        std::stringstream ls(trimmed);
        std::string verb;
        ls >> verb;
        std::map<std::string, std::string> kv;
        std::string tok;
        while (ls >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("script line " + std::to_string(line_no) +
                                            ": expected key=value tokens");
            kv[tok.substr(0, eq)] = tok.substr(eq + 1);
        }
        auto need = [&](const char* k) -> std::string {
            auto it = kv.find(k);
            if (it == kv.end())
                throw std::invalid_argument("script line " + std::to_string(line_no) +
                                            ": missing '" + k + "'");
            return it->second;
        };
        auto selector = [&]() {
            MsgSelector sel;
            sel.src = need("src");
            sel.dst = need("dst");
            auto type = msg_type_from_name(need("type"));
            if (!type)
                throw std::invalid_argument("script line " + std::to_string(line_no) +
                                            ": unknown message type");
            sel.type = *type;
            sel.ordinal = static_cast<std::uint32_t>(parse_u64(need("ordinal"), "ordinal"));
            return sel;
        };

        if (verb == "drop") {
            inject_drop(script, selector());
        } else if (verb == "tamper") {
            inject_tamper(script, selector(),
                          static_cast<std::uint32_t>(parse_u64(need("bit"), "bit")));
        } else if (verb == "delay") {
            inject_delay(script, selector(),
                         static_cast<std::uint32_t>(parse_u64(need("ticks"), "ticks")));
        } else if (verb == "replay") {
            inject_replay(script, selector(), parse_u64(need("at"), "at"));
        } else if (verb == "rollback") {
            inject_rollback(script, need("label"), parse_u64(need("version"), "version"),
                            parse_u64(need("at"), "at"));
        } else if (verb == "rollback-keyring") {
            AdversaryAction a;
            a.kind = AdversaryAction::Kind::RollbackKeyring;
            a.version = parse_u64(need("version"), "version");
            a.at_tick = parse_u64(need("at"), "at");
            script.actions.push_back(a);
        } else if (verb == "restart") {
            AdversaryAction a;
            a.kind = AdversaryAction::Kind::RestartGateway;
            a.at_tick = parse_u64(need("at"), "at");
            a.duration = static_cast<std::uint32_t>(parse_u64(need("duration"), "duration"));
            script.actions.push_back(a);
        } else if (verb == "set-host-clock") {
            AdversaryAction a;
            a.kind = AdversaryAction::Kind::SetHostClock;
            a.at_tick = parse_u64(need("at"), "at");
            a.clock_offset = parse_i64(need("offset"), "offset");
            script.actions.push_back(a);
        } else if (verb == "reinit") {
            AdversaryAction a;
            a.kind = AdversaryAction::Kind::ReinitMeter;
            a.meter = parse_u64(need("meter"), "meter");
            a.at_tick = parse_u64(need("at"), "at");
            script.actions.push_back(a);
        } else {
            throw std::invalid_argument("script line " + std::to_string(line_no) +
                                        ": unknown verb '" + verb + "'");
        }
    }
    return script;
}

}  // namespace secgrid
