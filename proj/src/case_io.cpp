#include "gridrisk/case_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <sstream>

#include <json.hpp>

namespace gridrisk {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

const char* bus_kind_name(BusKind kind) {
    switch (kind) {
    case BusKind::Slack: return "slack";
    case BusKind::PV: return "pv";
    case BusKind::PQ: return "pq";
    }
    return "?";
}

BusKind bus_kind_from(const std::string& s, const std::string& context) {
    const std::string k = lower(s);
    if (k == "slack") return BusKind::Slack;
    if (k == "pv") return BusKind::PV;
    if (k == "pq") return BusKind::PQ;
    throw ParseError("unknown bus kind '" + s + "'", -1, context);
}

double require_number(const json& obj, const char* key, const std::string& context) {
    if (!obj.contains(key)) throw ParseError("missing field", -1, context + "." + key);
    const json& v = obj.at(key);
    if (!v.is_number()) throw ParseError("expected a number", -1, context + "." + key);
    return v.get<double>();
}

int require_int(const json& obj, const char* key, const std::string& context) {
    if (!obj.contains(key)) throw ParseError("missing field", -1, context + "." + key);
    const json& v = obj.at(key);
    if (!v.is_number_integer()) throw ParseError("expected an integer", -1, context + "." + key);
    return v.get<int>();
}

std::string require_string(const json& obj, const char* key, const std::string& context) {
    if (!obj.contains(key)) throw ParseError("missing field", -1, context + "." + key);
    const json& v = obj.at(key);
    if (!v.is_string()) throw ParseError("expected a string", -1, context + "." + key);
    return v.get<std::string>();
}

} // namespace

CaseDocument parse_native_case(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(e.what());
    }
    if (!doc.is_object()) throw ParseError("top level must be a JSON object");

    const std::string name = doc.value("name", std::string("unnamed"));
    const std::string source = doc.value("source", std::string());
    if (!doc.contains("base_mva") || !doc["base_mva"].is_number())
        throw ParseError("missing field", -1, "base_mva");
    const double base_mva = doc["base_mva"].get<double>();
    const double frequency = doc.value("frequency", 50.0);

    std::vector<Bus> buses;
    std::vector<int> external_ids;
    if (!doc.contains("buses") || !doc["buses"].is_array())
        throw ParseError("missing array", -1, "buses");
    for (std::size_t i = 0; i < doc["buses"].size(); ++i) {
        const json& jb = doc["buses"][i];
        const std::string ctx = "buses[" + std::to_string(i) + "]";
        if (!jb.is_object()) throw ParseError("expected an object", -1, ctx);
        Bus bus;
        bus.id = require_int(jb, "id", ctx);
        bus.kind = bus_kind_from(require_string(jb, "kind", ctx), ctx);
        bus.voltage_setpoint = jb.value("voltage_setpoint", 1.0);
        bus.load_p = jb.value("load_p", 0.0);
        bus.load_q = jb.value("load_q", 0.0);
        bus.vmin = require_number(jb, "vmin", ctx);
        bus.vmax = require_number(jb, "vmax", ctx);
        buses.push_back(bus);
        external_ids.push_back(jb.value("external_id", bus.id));
    }

    std::vector<Branch> branches;
    if (!doc.contains("branches") || !doc["branches"].is_array())
        throw ParseError("missing array", -1, "branches");
    for (std::size_t i = 0; i < doc["branches"].size(); ++i) {
        const json& jb = doc["branches"][i];
        const std::string ctx = "branches[" + std::to_string(i) + "]";
        if (!jb.is_object()) throw ParseError("expected an object", -1, ctx);
        Branch br;
        const std::string kind = lower(require_string(jb, "kind", ctx));
        if (kind == "line") br.kind = ComponentClass::Line;
        else if (kind == "transformer") br.kind = ComponentClass::Transformer;
        else throw ParseError("unknown branch kind '" + kind + "'", -1, ctx);
        br.id = require_int(jb, "id", ctx);
        br.from_bus = require_int(jb, "from_bus", ctx);
        br.to_bus = require_int(jb, "to_bus", ctx);
        br.r = jb.value("r", 0.0);
        br.x = require_number(jb, "x", ctx);
        br.b_shunt = jb.value("b_shunt", 0.0);
        br.tap_ratio = jb.value("tap_ratio", 1.0);
        br.rating = require_number(jb, "rating", ctx);
        br.in_service = jb.value("in_service", true);
        branches.push_back(br);
    }

    std::vector<Generator> generators;
    if (!doc.contains("generators") || !doc["generators"].is_array())
        throw ParseError("missing array", -1, "generators");
    for (std::size_t i = 0; i < doc["generators"].size(); ++i) {
        const json& jg = doc["generators"][i];
        const std::string ctx = "generators[" + std::to_string(i) + "]";
        if (!jg.is_object()) throw ParseError("expected an object", -1, ctx);
        Generator g;
        g.id = require_int(jg, "id", ctx);
        g.bus = require_int(jg, "bus", ctx);
        g.p_set = require_number(jg, "p_set", ctx);
        g.p_min = jg.value("p_min", 0.0);
        g.p_max = require_number(jg, "p_max", ctx);
        g.q_min = jg.value("q_min", -1e4);
        g.q_max = jg.value("q_max", 1e4);
        g.mva_base = jg.value("mva_base", 100.0);
        g.inertia_h = jg.value("inertia_h", 4.0);
        g.damping_d = jg.value("damping_d", 2.0);
        g.xd_transient = jg.value("xd_transient", 0.3);
        g.in_service = jg.value("in_service", true);
        generators.push_back(g);
    }

    CaseDocument result;
    result.grid = make_grid_case(name, base_mva, frequency, std::move(buses), std::move(branches),
                                 std::move(generators), std::move(external_ids));
    result.source = source;
    result.checksum = case_checksum(result.grid);
    return result;
}

std::string serialize_native_case(const GridCase& grid, const std::string& source) {
    json doc;
    doc["name"] = grid.name;
    if (!source.empty()) doc["source"] = source;
    doc["base_mva"] = grid.base_mva;
    doc["frequency"] = grid.frequency;

    doc["buses"] = json::array();
    for (const Bus& bus : grid.buses) {
        json jb;
        jb["id"] = bus.id;
        jb["kind"] = bus_kind_name(bus.kind);
        jb["voltage_setpoint"] = bus.voltage_setpoint;
        jb["load_p"] = bus.load_p;
        jb["load_q"] = bus.load_q;
        jb["vmin"] = bus.vmin;
        jb["vmax"] = bus.vmax;
        if (grid.external_bus_ids[bus.id] != bus.id)
            jb["external_id"] = grid.external_bus_ids[bus.id];
        doc["buses"].push_back(jb);
    }
    doc["branches"] = json::array();
    for (const Branch& br : grid.branches) {
        json jb;
        jb["kind"] = to_string(br.kind);
        jb["id"] = br.id;
        jb["from_bus"] = br.from_bus;
        jb["to_bus"] = br.to_bus;
        jb["r"] = br.r;
        jb["x"] = br.x;
        jb["b_shunt"] = br.b_shunt;
        jb["tap_ratio"] = br.tap_ratio;
        jb["rating"] = br.rating;
        jb["in_service"] = br.in_service;
        doc["branches"].push_back(jb);
    }
    doc["generators"] = json::array();
    for (const Generator& g : grid.generators) {
        json jg;
        jg["id"] = g.id;
        jg["bus"] = g.bus;
        jg["p_set"] = g.p_set;
        jg["p_min"] = g.p_min;
        jg["p_max"] = g.p_max;
        jg["q_min"] = g.q_min;
        jg["q_max"] = g.q_max;
        jg["mva_base"] = g.mva_base;
        jg["inertia_h"] = g.inertia_h;
        jg["damping_d"] = g.damping_d;
        jg["xd_transient"] = g.xd_transient;
        jg["in_service"] = g.in_service;
        doc["generators"].push_back(jg);
    }
    return doc.dump(2);
}

std::string case_checksum(const GridCase& grid) {
    // Canonical form: the serialized grid without provenance metadata.
    const std::string canonical = serialize_native_case(grid, "");
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(hash));
    return std::string(out);
}

// ---------------------------------------------------------------------------
// MATPOWER subset parser

namespace {

struct MatpowerBlocks {
    double base_mva = 0.0;
    bool has_base = false;
    std::map<std::string, std::vector<std::vector<double>>> matrices;
    std::vector<std::string> warnings;
};

// Strips % comments, then scans `name = value;` scalars and
// `name = [ rows ];` matrices. Row separators are ; or newline.
MatpowerBlocks scan_matpower(const std::string& text) {
    MatpowerBlocks blocks;
    std::string clean;
    clean.reserve(text.size());
    bool in_comment = false;
    for (char c : text) {
        if (c == '%') in_comment = true;
        if (c == '\n') in_comment = false;
        clean.push_back(in_comment ? ' ' : c);
    }

    std::size_t pos = 0;
    auto skip_ws = [&] {
        while (pos < clean.size() && std::isspace(static_cast<unsigned char>(clean[pos]))) ++pos;
    };
    while (pos < clean.size()) {
        skip_ws();
        if (pos >= clean.size()) break;
        // read identifier (allow mpc. prefix and quotes skipped later)
        std::size_t start = pos;
        while (pos < clean.size() &&
               (std::isalnum(static_cast<unsigned char>(clean[pos])) || clean[pos] == '_' || clean[pos] == '.'))
            ++pos;
        if (pos == start) {
            ++pos;
            continue;
        }
        std::string ident = clean.substr(start, pos - start);
        if (ident.rfind("mpc.", 0) == 0) ident = ident.substr(4);
        skip_ws();
        if (pos >= clean.size() || clean[pos] != '=') continue;
        ++pos;
        skip_ws();
        if (pos < clean.size() && clean[pos] == '[') {
            ++pos;
            std::size_t close = clean.find(']', pos);
            if (close == std::string::npos) throw ParseError("unterminated matrix block", -1, ident);
            std::string body = clean.substr(pos, close - pos);
            pos = close + 1;
            std::vector<std::vector<double>> rows;
            std::string row_text;
            auto flush_row = [&] {
                const std::string t = trim(row_text);
                row_text.clear();
                if (t.empty()) return;
                std::vector<double> row;
                std::istringstream iss(t);
                std::string tok;
                while (iss >> tok) {
                    try {
                        std::size_t used = 0;
                        const double v = std::stod(tok, &used);
                        if (used != tok.size()) throw std::invalid_argument(tok);
                        row.push_back(v);
                    } catch (const std::exception&) {
                        throw ParseError("non-numeric token '" + tok + "' in row " +
                                             std::to_string(rows.size() + 1),
                                         -1, ident);
                    }
                }
                rows.push_back(std::move(row));
            };
            for (char c : body) {
                if (c == ';' || c == '\n') flush_row();
                else row_text.push_back(c);
            }
            flush_row();
            blocks.matrices[ident] = std::move(rows);
        } else {
            std::size_t semi = clean.find(';', pos);
            std::string value = trim(clean.substr(pos, semi == std::string::npos ? std::string::npos : semi - pos));
            pos = semi == std::string::npos ? clean.size() : semi + 1;
            if (ident == "baseMVA") {
                try {
                    blocks.base_mva = std::stod(value);
                    blocks.has_base = true;
                } catch (const std::exception&) {
                    throw ParseError("baseMVA is not a number: '" + value + "'", -1, ident);
                }
            } else if (ident == "version") {
                std::string v = value;
                v.erase(std::remove(v.begin(), v.end(), '\''), v.end());
                if (trim(v) != "2")
                    blocks.warnings.push_back("case version '" + trim(v) + "' treated as version 2");
            }
            // other scalars ignored
        }
    }
    return blocks;
}

void require_arity(const std::vector<double>& row, std::size_t need, const char* block, std::size_t row_index) {
    if (row.size() < need)
        throw ParseError(std::string(block) + " row " + std::to_string(row_index + 1) + " has " +
                         std::to_string(row.size()) + " columns, expected at least " + std::to_string(need));
}

} // namespace

CaseDocument parse_matpower_case(const std::string& text) {
    MatpowerBlocks blocks = scan_matpower(text);
    std::vector<std::string> warnings = std::move(blocks.warnings);
    if (!blocks.has_base) throw ParseError("missing baseMVA");
    const double base = blocks.base_mva;
    if (base <= 0) throw ParseError("baseMVA must be positive");
    if (!blocks.matrices.count("bus")) throw ParseError("missing bus matrix");
    if (!blocks.matrices.count("gen")) throw ParseError("missing gen matrix");
    if (!blocks.matrices.count("branch")) throw ParseError("missing branch matrix");
    for (const auto& [name, rows] : blocks.matrices) {
        (void)rows;
        if (name != "bus" && name != "gen" && name != "branch")
            warnings.push_back("unsupported block '" + name + "' ignored");
    }

    // bus: bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin
    std::map<int, int> bus_of_external;
    std::vector<Bus> buses;
    std::vector<int> external_ids;
    const auto& bus_rows = blocks.matrices["bus"];
    for (std::size_t i = 0; i < bus_rows.size(); ++i) {
        const auto& row = bus_rows[i];
        require_arity(row, 13, "bus", i);
        Bus bus;
        bus.id = static_cast<int>(buses.size());
        const int external = static_cast<int>(row[0]);
        if (bus_of_external.count(external))
            throw ParseError("bus row " + std::to_string(i + 1) + " repeats bus number " +
                             std::to_string(external));
        bus_of_external[external] = bus.id;
        const int type = static_cast<int>(row[1]);
        switch (type) {
        case 3: bus.kind = BusKind::Slack; break;
        case 2: bus.kind = BusKind::PV; break;
        case 1: bus.kind = BusKind::PQ; break;
        case 4:
            bus.kind = BusKind::PQ;
            warnings.push_back("bus " + std::to_string(external) + " marked isolated; kept as PQ");
            break;
        default:
            throw ParseError("bus row " + std::to_string(i + 1) + " has unknown type " +
                             std::to_string(type));
        }
        bus.load_p = row[2] / base;
        bus.load_q = row[3] / base;
        // Fixed bus shunts fold into constant-power load at nominal voltage
        // (the model carries no shunt element).
        if (row[4] != 0.0 || row[5] != 0.0) {
            bus.load_p += row[4] / base;
            bus.load_q -= row[5] / base;
            warnings.push_back("bus " + std::to_string(external) +
                               ": shunt folded into constant-power load");
        }
        bus.voltage_setpoint = 1.0;
        bus.vmax = row[11];
        bus.vmin = row[12];
        buses.push_back(bus);
        external_ids.push_back(external);
    }

    // gen: bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin ...
    std::vector<Generator> generators;
    const auto& gen_rows = blocks.matrices["gen"];
    for (std::size_t i = 0; i < gen_rows.size(); ++i) {
        const auto& row = gen_rows[i];
        require_arity(row, 10, "gen", i);
        Generator g;
        g.id = static_cast<int>(i);
        const int external = static_cast<int>(row[0]);
        auto it = bus_of_external.find(external);
        if (it == bus_of_external.end())
            throw ParseError("gen row " + std::to_string(i + 1) + " references unknown bus " +
                             std::to_string(external));
        g.bus = it->second;
        g.p_set = row[1] / base;
        g.q_max = row[3] / base;
        g.q_min = row[4] / base;
        g.mva_base = row[6] > 0 ? row[6] : base;
        g.in_service = row[7] > 0;
        g.p_max = row[8] / base;
        g.p_min = row[9] / base;
        if (row[5] > 0) buses[g.bus].voltage_setpoint = row[5];
        generators.push_back(g);
    }

    // branch: fbus tbus r x b rateA rateB rateC ratio angle status ...
    std::vector<Branch> branches;
    int next_line_id = 0, next_xfmr_id = 0;
    const auto& branch_rows = blocks.matrices["branch"];
    for (std::size_t i = 0; i < branch_rows.size(); ++i) {
        const auto& row = branch_rows[i];
        require_arity(row, 11, "branch", i);
        Branch br;
        const int f = static_cast<int>(row[0]);
        const int t = static_cast<int>(row[1]);
        if (!bus_of_external.count(f) || !bus_of_external.count(t))
            throw ParseError("branch row " + std::to_string(i + 1) + " references unknown bus");
        br.from_bus = bus_of_external[f];
        br.to_bus = bus_of_external[t];
        br.r = row[2];
        br.x = row[3];
        br.b_shunt = row[4];
        if (row[5] > 0) {
            br.rating = row[5] / base;
        } else {
            br.rating = 1e4; // MATPOWER 0 means unlimited
            warnings.push_back("branch row " + std::to_string(i + 1) +
                               ": zero rating treated as unlimited");
        }
        const double ratio = row[8];
        if (ratio != 0.0) {
            br.kind = ComponentClass::Transformer;
            br.id = next_xfmr_id++;
            br.tap_ratio = ratio;
        } else {
            br.kind = ComponentClass::Line;
            br.id = next_line_id++;
            br.tap_ratio = 1.0;
        }
        if (row[9] != 0.0)
            warnings.push_back("branch row " + std::to_string(i + 1) +
                               ": phase-shift angle ignored");
        br.in_service = row[10] > 0;
        branches.push_back(br);
    }

    CaseDocument result;
    result.grid = make_grid_case("matpower-import", base, 50.0, std::move(buses),
                                 std::move(branches), std::move(generators), std::move(external_ids));
    result.source = "matpower";
    result.checksum = case_checksum(result.grid);
    result.warnings = std::move(warnings);
    return result;
}

// ---------------------------------------------------------------------------
// Reliability CSV

ReliabilityTable default_reliability() {
    ReliabilityTable table;
    table.class_defaults[ComponentClass::Line] = 0.05;
    table.class_defaults[ComponentClass::Transformer] = 0.02;
    table.class_defaults[ComponentClass::Generator] = 0.10;
    return table;
}

ReliabilityTable load_reliability(const std::string& text, const GridCase& grid) {
    ReliabilityTable table = default_reliability();

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    std::vector<std::string> breaches;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::vector<std::string> fields;
        std::istringstream ls(t);
        std::string field;
        while (std::getline(ls, field, ',')) fields.push_back(trim(field));
        if (!header_seen) {
            if (fields.size() != 4 || lower(fields[0]) != "kind" || lower(fields[1]) != "target" ||
                lower(fields[2]) != "value" || lower(fields[3]) != "unit")
                throw ParseError("expected header 'kind,target,value,unit'", line_no);
            header_seen = true;
            continue;
        }
        if (fields.size() != 4)
            throw ParseError("expected 4 fields, got " + std::to_string(fields.size()), line_no);

        const std::string kind = lower(fields[0]);
        const std::string target = lower(fields[1]);
        const std::string unit = lower(fields[3]);
        double value = 0;
        try {
            value = std::stod(fields[2]);
        } catch (const std::exception&) {
            throw ParseError("value is not a number: '" + fields[2] + "'", line_no);
        }

        double lambda = 0;
        if (kind == "lambda") {
            if (unit != "per_year") throw ParseError("lambda unit must be per_year", line_no);
            lambda = value;
        } else if (kind == "mttf") {
            if (unit != "years") throw ParseError("mttf unit must be years", line_no);
            if (value <= 0) {
                breaches.push_back("line " + std::to_string(line_no) + ": mttf must be positive");
                continue;
            }
            lambda = 1.0 / value;
        } else {
            throw ParseError("kind must be lambda or mttf, got '" + fields[0] + "'", line_no);
        }
        if (lambda <= 0) {
            breaches.push_back("line " + std::to_string(line_no) + ": failure rate must be positive");
            continue;
        }

        if (auto cls = component_class_from_string(target)) {
            table.class_defaults[*cls] = lambda;
        } else if (auto ref = parse_component_ref(target)) {
            if (!grid.has_component(*ref)) {
                breaches.push_back("line " + std::to_string(line_no) +
                                   ": override references unknown component " + ref->str());
                continue;
            }
            table.overrides[*ref] = lambda;
        } else {
            throw ParseError("target must be a component class or class:<id>, got '" + fields[1] + "'",
                             line_no);
        }
    }
    if (!breaches.empty()) throw ValidationError(std::move(breaches));
    return table;
}

} // namespace gridrisk
