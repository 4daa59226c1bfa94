#include "cpal/tree.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cpal/errors.hpp"

namespace cpal {

using nlohmann::json;

std::optional<Rational> parse_rational(const std::string& text) {
    auto parse_int = [](std::string_view s, std::int64_t& out) {
        if (s.empty()) return false;
        auto res = std::from_chars(s.data(), s.data() + s.size(), out);
        return res.ec == std::errc{} && res.ptr == s.data() + s.size();
    };
    std::string_view sv(text);
    std::size_t slash = sv.find('/');
    std::int64_t num = 0, den = 1;
    if (slash == std::string_view::npos) {
        if (!parse_int(sv, num)) return std::nullopt;
    } else {
        if (!parse_int(sv.substr(0, slash), num)) return std::nullopt;
        if (!parse_int(sv.substr(slash + 1), den)) return std::nullopt;
        if (den == 0) return std::nullopt;
    }
    return Rational::normalized(num, den);
}

std::size_t RawTree::class_index(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
        if (classes[i] == name) return i;
    throw ValidationError("unknown class '" + name + "'");
}

namespace {

void check_probabilities(const std::vector<double>& probs,
                         const std::vector<std::optional<Rational>>& exact) {
    for (double p : probs)
        if (!(p > 0.0))
            throw ValidationError("state probabilities must be positive");
    bool all_exact = !exact.empty() &&
                     std::all_of(exact.begin(), exact.end(), [](const auto& r) { return r.has_value(); });
    if (all_exact) {
        std::optional<Rational> sum = Rational{0, 1};
        for (const auto& r : exact) {
            sum = rat_add(*sum, *r);
            if (!sum) break;
        }
        if (sum && *sum == Rational{1, 1}) return;
        if (sum) throw ValidationError("state probabilities sum to " + sum->str() + ", expected 1");
    }
    double total = 0.0;
    for (double p : probs) total += p;
    if (std::abs(total - 1.0) > 1e-12)
        throw ValidationError("state probabilities sum to " + std::to_string(total) + ", expected 1");
}

} // namespace

void RawTree::validate() const {
    if (classes.empty()) throw ValidationError("no classes declared");
    if (states.empty()) throw ValidationError("no states declared");
    std::set<std::string> class_set(classes.begin(), classes.end());
    if (class_set.size() != classes.size())
        throw ValidationError("duplicate class name");

    std::set<std::string> state_ids;
    std::set<std::string> used_classes;
    std::vector<double> probs;
    std::vector<std::optional<Rational>> exact;
    for (const auto& st : states) {
        if (!state_ids.insert(st.id).second)
            throw ValidationError("duplicate state id '" + st.id + "'");
        if (st.alternatives.empty())
            throw ValidationError("state '" + st.id + "' has no alternatives");
        std::set<std::string> alt_ids;
        for (const auto& alt : st.alternatives) {
            if (!alt_ids.insert(alt.id).second)
                throw ValidationError("duplicate alternative id '" + alt.id + "' in state '" + st.id + "'");
            if (!class_set.count(alt.cls))
                throw ValidationError("alternative '" + alt.id + "' maps to undeclared class '" + alt.cls + "'");
            if (!std::isfinite(alt.payoff))
                throw ValidationError("alternative '" + alt.id + "' has non-finite payoff");
            used_classes.insert(alt.cls);
        }
        probs.push_back(st.prob);
        exact.push_back(st.prob_exact);
    }
    for (const auto& c : classes)
        if (!used_classes.count(c))
            throw ValidationError("class '" + c + "' is not used by any alternative");
    check_probabilities(probs, exact);
}

bool ReducedState::contains(std::size_t cls) const {
    return std::binary_search(members.begin(), members.end(), cls);
}

std::size_t ReducedState::member_pos(std::size_t cls) const {
    auto it = std::lower_bound(members.begin(), members.end(), cls);
    if (it == members.end() || *it != cls) return npos;
    return static_cast<std::size_t>(it - members.begin());
}

double ReducedTree::payoff(std::size_t si, std::size_t pos) const {
    const auto& st = states[si];
    double base = st.payoffs[pos];
    return st.members.size() == 1 ? base + unary_shift : base;
}

std::size_t ReducedTree::class_index(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
        if (classes[i] == name) return i;
    throw ValidationError("unknown class '" + name + "'");
}

std::vector<std::vector<std::pair<std::size_t, std::size_t>>> ReducedTree::incidence() const {
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> by_class(classes.size());
    for (std::size_t si = 0; si < states.size(); ++si)
        for (std::size_t pos = 0; pos < states[si].members.size(); ++pos)
            by_class[states[si].members[pos]].push_back({si, pos});
    return by_class;
}

void ReducedTree::validate() const {
    if (classes.empty()) throw ValidationError("no classes declared");
    if (states.empty()) throw ValidationError("no states declared");
    std::set<std::string> class_set(classes.begin(), classes.end());
    if (class_set.size() != classes.size())
        throw ValidationError("duplicate class name");

    std::set<std::vector<std::size_t>> seen;
    std::vector<double> probs;
    std::vector<std::optional<Rational>> exact;
    std::vector<bool> used(classes.size(), false);
    for (const auto& st : states) {
        if (st.members.empty())
            throw ValidationError("reduced state with empty class set");
        if (!std::is_sorted(st.members.begin(), st.members.end()) ||
            std::adjacent_find(st.members.begin(), st.members.end()) != st.members.end())
            throw ValidationError("reduced state members must be strictly increasing class indices");
        if (st.members.back() >= classes.size())
            throw ValidationError("reduced state references class index out of range");
        if (st.payoffs.size() != st.members.size())
            throw ValidationError("reduced state payoff count does not match member count");
        for (double u : st.payoffs)
            if (!std::isfinite(u))
                throw ValidationError("reduced state has non-finite payoff");
        if (!seen.insert(st.members).second)
            throw ValidationError("duplicate reduced state (same class set)");
        for (std::size_t m : st.members) used[m] = true;
        probs.push_back(st.prob);
        exact.push_back(st.prob_exact);
    }
    for (std::size_t i = 0; i < classes.size(); ++i)
        if (!used[i])
            throw ValidationError("class '" + classes[i] + "' appears in no state");
    check_probabilities(probs, exact);
    if (!std::isfinite(unary_shift))
        throw ValidationError("non-finite unary shift");
}

std::vector<std::string> ReducedTree::warnings() const {
    std::vector<std::string> out;
    // Exactly equal payoff entries across two classes can tie their
    // consistent valuations; classification then leans on the tie epsilon.
    std::map<double, std::set<std::size_t>> owners;
    for (std::size_t si = 0; si < states.size(); ++si)
        for (std::size_t pos = 0; pos < states[si].members.size(); ++pos)
            owners[payoff(si, pos)].insert(states[si].members[pos]);
    for (const auto& [value, cls] : owners) {
        if (cls.size() < 2) continue;
        std::ostringstream os;
        os << "payoff " << value << " is shared by classes";
        for (std::size_t c : cls) os << " '" << classes[c] << "'";
        os << "; consistent valuations may tie";
        out.push_back(os.str());
    }
    return out;
}

ReducedTree reduce(const RawTree& raw) {
    raw.validate();
    ReducedTree out;
    out.classes = raw.classes;

    // Group raw states by the set of classes their alternatives reach.
    std::map<std::vector<std::size_t>, std::vector<std::size_t>> groups;
    for (std::size_t si = 0; si < raw.states.size(); ++si) {
        std::set<std::size_t> cls;
        for (const auto& alt : raw.states[si].alternatives)
            cls.insert(raw.class_index(alt.cls));
        groups[std::vector<std::size_t>(cls.begin(), cls.end())].push_back(si);
    }

    for (const auto& [members, state_ids] : groups) {
        ReducedState rs;
        rs.members = members;
        std::optional<Rational> prob_sum = Rational{0, 1};
        for (std::size_t si : state_ids) {
            rs.prob += raw.states[si].prob;
            if (prob_sum && raw.states[si].prob_exact)
                prob_sum = rat_add(*prob_sum, *raw.states[si].prob_exact);
            else
                prob_sum.reset();
        }
        if (prob_sum) {
            rs.prob_exact = *prob_sum;
            rs.prob = prob_sum->to_double();
        }
        rs.payoffs.resize(members.size());
        for (std::size_t pos = 0; pos < members.size(); ++pos) {
            std::size_t cls = members[pos];
            double weighted = 0.0;
            for (std::size_t si : state_ids) {
                double sum = 0.0;
                int count = 0;
                for (const auto& alt : raw.states[si].alternatives) {
                    if (raw.class_index(alt.cls) == cls) { sum += alt.payoff; ++count; }
                }
                weighted += raw.states[si].prob * (sum / count);
            }
            rs.payoffs[pos] = weighted / rs.prob;
        }
        out.states.push_back(std::move(rs));
    }
    out.validate();
    return out;
}

ReducedTree shift_unary_payoffs(const ReducedTree& t, double z) {
    if (!std::isfinite(z)) throw ValidationError("shift must be finite");
    ReducedTree out = t;
    out.unary_shift += z;
    return out;
}

SupportProfile support_profile(const ReducedTree& t) {
    SupportProfile sp;
    std::map<std::vector<std::size_t>, double> prob_of;
    for (const auto& st : t.states) prob_of[st.members] = st.prob;
    std::size_t n = t.n_classes();

    sp.has_all_unary = true;
    for (std::size_t i = 0; i < n; ++i)
        if (!prob_of.count({i})) { sp.has_all_unary = false; break; }

    sp.has_all_binary = true;
    for (std::size_t i = 0; i < n && sp.has_all_binary; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (!prob_of.count({i, j})) { sp.has_all_binary = false; break; }

    sp.monotone = true;
    for (const auto& [a, pa] : prob_of) {
        for (const auto& [b, pb] : prob_of) {
            if (a.size() >= b.size() || a == b) continue;
            if (!std::includes(b.begin(), b.end(), a.begin(), a.end())) continue;
            if (pa > pb + 1e-12) { sp.monotone = false; break; }
        }
        if (!sp.monotone) break;
    }

    sp.uniform_unary = true;
    std::optional<double> unary_p;
    for (const auto& [members, p] : prob_of) {
        if (members.size() != 1) continue;
        if (!unary_p) unary_p = p;
        else if (std::abs(*unary_p - p) > 1e-12) { sp.uniform_unary = false; break; }
    }
    return sp;
}

PayoffBox payoff_box(const ReducedTree& t) {
    std::size_t n = t.n_classes();
    PayoffBox box;
    box.lo.assign(n, std::numeric_limits<double>::infinity());
    box.hi.assign(n, -std::numeric_limits<double>::infinity());
    for (std::size_t si = 0; si < t.states.size(); ++si) {
        const auto& st = t.states[si];
        for (std::size_t pos = 0; pos < st.members.size(); ++pos) {
            double u = t.payoff(si, pos);
            std::size_t c = st.members[pos];
            box.lo[c] = std::min(box.lo[c], u);
            box.hi[c] = std::max(box.hi[c], u);
        }
    }
    return box;
}

double PayoffBox::global_lo() const { return *std::min_element(lo.begin(), lo.end()); }
double PayoffBox::global_hi() const { return *std::max_element(hi.begin(), hi.end()); }

bool PayoffBox::contains(const std::vector<double>& v, double slack) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (v[i] < lo[i] - slack || v[i] > hi[i] + slack) return false;
    return true;
}

namespace {

json parse_json_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(e.what()); // keeps the library's line/column reference
    }
}

// prob fields accept a JSON number or an exact "a/b" string.
void read_prob(const json& j, double& prob, std::optional<Rational>& exact) {
    if (j.is_string()) {
        auto r = parse_rational(j.get<std::string>());
        if (!r) throw ValidationError("bad rational probability '" + j.get<std::string>() + "'");
        exact = *r;
        prob = r->to_double();
    } else if (j.is_number()) {
        prob = j.get<double>();
        exact.reset();
    } else {
        throw ValidationError("probability must be a number or an \"a/b\" string");
    }
}

json prob_to_json(double prob, const std::optional<Rational>& exact) {
    if (exact && exact->den != 1) return json(exact->str());
    return json(prob);
}

RawTree raw_tree_from_json(const json& j) {
    RawTree t;
    if (!j.contains("classes") || !j.contains("states"))
        throw ValidationError("tree file must contain 'classes' and 'states'");
    t.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& js : j.at("states")) {
        RawState st;
        st.id = js.at("id").get<std::string>();
        read_prob(js.at("prob"), st.prob, st.prob_exact);
        for (const auto& ja : js.at("alternatives")) {
            Alternative alt;
            alt.id = ja.at("id").get<std::string>();
            alt.cls = ja.at("class").get<std::string>();
            alt.payoff = ja.at("payoff").get<double>();
            st.alternatives.push_back(std::move(alt));
        }
        t.states.push_back(std::move(st));
    }
    t.validate();
    return t;
}

ReducedTree reduced_tree_from_json(const json& j) {
    ReducedTree t;
    t.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& js : j.at("states")) {
        ReducedState st;
        auto names = js.at("classes").get<std::vector<std::string>>();
        std::vector<std::pair<std::size_t, std::string>> members;
        for (const auto& nm : names) members.push_back({t.class_index(nm), nm});
        std::sort(members.begin(), members.end());
        read_prob(js.at("prob"), st.prob, st.prob_exact);
        const auto& pay = js.at("payoffs");
        for (const auto& [idx, nm] : members) {
            st.members.push_back(idx);
            if (!pay.contains(nm))
                throw ValidationError("reduced state missing payoff for class '" + nm + "'");
            st.payoffs.push_back(pay.at(nm).get<double>());
        }
        t.states.push_back(std::move(st));
    }
    t.validate();
    return t;
}

} // namespace

RawTree raw_tree_from_json_text(const std::string& text) {
    json j = parse_json_text(text);
    try {
        return raw_tree_from_json(j);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad tree file: ") + e.what());
    }
}

LoadedTree load_tree_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    json j = parse_json_text(buf.str());
    LoadedTree lt;
    try {
        if (j.value("reduced", false)) {
            lt.reduced = reduced_tree_from_json(j);
        } else {
            lt.raw = raw_tree_from_json(j);
            lt.reduced = reduce(*lt.raw);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad tree file: ") + e.what());
    }
    return lt;
}

std::string reduced_tree_to_json_text(const ReducedTree& t) {
    json j;
    j["reduced"] = true;
    j["classes"] = t.classes;
    json states = json::array();
    for (std::size_t si = 0; si < t.states.size(); ++si) {
        const auto& st = t.states[si];
        json js;
        json names = json::array();
        for (std::size_t m : st.members) names.push_back(t.classes[m]);
        js["classes"] = names;
        js["prob"] = prob_to_json(st.prob, st.prob_exact);
        json pay;
        for (std::size_t pos = 0; pos < st.members.size(); ++pos)
            pay[t.classes[st.members[pos]]] = t.payoff(si, pos);
        js["payoffs"] = pay;
        states.push_back(std::move(js));
    }
    j["states"] = std::move(states);
    return j.dump(2) + "\n";
}

void save_reduced_tree(const ReducedTree& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << reduced_tree_to_json_text(t);
}

} // namespace cpal
