#pragma once

// Flat guarded-transition controller specifications and their cyclic scan
// semantics. The grammar is documented in docs/gts-language.md.

#include <tunneltwin/error.hpp>

#include <cctype>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tunneltwin {

// ---------------------------------------------------------------------------
// Specification model
// ---------------------------------------------------------------------------

enum class ExprOp { True, False, Number, Location, Disc, Input, Timer, Not, And, Or, Eq, Ne, Ge, Le, Gt, Lt };

struct Expr {
    ExprOp op = ExprOp::True;
    double number = 0.0;
    int index = -1; // Location/Disc/Input/Timer
    std::unique_ptr<Expr> lhs, rhs;
    bool is_real = false;
};

struct Assignment {
    bool to_timer = false;
    int target = -1; // disc or timer index
    std::unique_ptr<Expr> value;
};

struct GtsDisc {
    std::string name;
    int owner = -1;
    bool initial = false;
};

struct GtsInput {
    std::string name;
    int owner = -1;
};

struct GtsTimer {
    std::string name;
    int owner = -1;
    double rate = 1.0;
};

struct GtsEvent {
    std::string name;
    int owner = -1;
    bool controllable = false;
    std::vector<int> participants; // automata with at least one edge on this event
};

struct GtsLocation {
    std::string name; // may be empty (anonymous single location)
    int owner = -1;
};

struct GtsEdge {
    int owner = -1;
    int location = -1;
    int event = -1;
    std::unique_ptr<Expr> guard; // null: always true
    std::vector<Assignment> updates;
    int target = -1; // -1: stay
    int line = 0;
};

struct GtsAutomaton {
    std::string name; // dotted path
    int initial_location = -1;
    std::vector<int> locations, discs, inputs, timers, events, edges;
};

struct GtsSpec {
    std::vector<GtsAutomaton> automata;
    std::vector<GtsLocation> locations;
    std::vector<GtsDisc> discs;
    std::vector<GtsInput> inputs;
    std::vector<GtsTimer> timers;
    std::vector<GtsEvent> events;
    std::vector<GtsEdge> edges;

    /// "<automaton>@<line>", stable across runs; used in livelock reports.
    [[nodiscard]] std::string edge_id(int e) const {
        return automata[static_cast<std::size_t>(edges[static_cast<std::size_t>(e)].owner)].name + "@" +
               std::to_string(edges[static_cast<std::size_t>(e)].line);
    }

    [[nodiscard]] std::string qualified(int owner, const std::string &member) const {
        return automata[static_cast<std::size_t>(owner)].name + "." + member;
    }

    /// PLC point name of a declared variable: "dvar_M_M_" / "ivar_M_M_" followed
    /// by the automaton path with dots replaced by underscores.
    [[nodiscard]] std::string plc_name(bool input, int owner, const std::string &member) const {
        std::string path = automata[static_cast<std::size_t>(owner)].name;
        for (auto &c : path)
            if (c == '.')
                c = '_';
        return std::string(input ? "ivar_M_M_" : "dvar_M_M_") + path + "_" + member;
    }

    [[nodiscard]] std::string disc_plc_name(int d) const {
        const auto &v = discs[static_cast<std::size_t>(d)];
        return plc_name(false, v.owner, v.name);
    }

    [[nodiscard]] std::string input_plc_name(int i) const {
        const auto &v = inputs[static_cast<std::size_t>(i)];
        return plc_name(true, v.owner, v.name);
    }
};

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

namespace gts_detail {

enum class Tok { Ident, Number, Colon, Semi, Comma, Dot, LParen, RParen, Assign, Eq, Ne, Ge, Le, Gt, Lt, End };

struct Token {
    Tok kind;
    std::string text;
    int line;
    int col;
};

inline std::vector<Token> lex(std::string_view src) {
    std::vector<Token> out;
    int line = 1, col = 1;
    std::size_t i = 0;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) {
            if (src[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
            ++i;
        }
    };
    while (i < src.size()) {
        char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(1);
            continue;
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
            while (i < src.size() && src[i] != '\n')
                advance(1);
            continue;
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '*') {
            int l0 = line, c0 = col;
            advance(2);
            while (i + 1 < src.size() && !(src[i] == '*' && src[i + 1] == '/'))
                advance(1);
            if (i + 1 >= src.size())
                throw SourceError(ErrorCode::SyntaxError, l0, c0, "unterminated comment");
            advance(2);
            continue;
        }
        int l = line, co = col;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_'))
                ++j;
            out.push_back({Tok::Ident, std::string(src.substr(i, j - i)), l, co});
            advance(j - i);
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j])))
                ++j;
            if (j + 1 < src.size() && src[j] == '.' && std::isdigit(static_cast<unsigned char>(src[j + 1]))) {
                ++j;
                while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j])))
                    ++j;
            }
            out.push_back({Tok::Number, std::string(src.substr(i, j - i)), l, co});
            advance(j - i);
            continue;
        }
        auto two = src.substr(i, 2);
        Tok k;
        std::size_t n = 1;
        if (two == ":=") {
            k = Tok::Assign;
            n = 2;
        } else if (two == "!=") {
            k = Tok::Ne;
            n = 2;
        } else if (two == ">=") {
            k = Tok::Ge;
            n = 2;
        } else if (two == "<=") {
            k = Tok::Le;
            n = 2;
        } else {
            switch (c) {
            case ':': k = Tok::Colon; break;
            case ';': k = Tok::Semi; break;
            case ',': k = Tok::Comma; break;
            case '.': k = Tok::Dot; break;
            case '(': k = Tok::LParen; break;
            case ')': k = Tok::RParen; break;
            case '=': k = Tok::Eq; break;
            case '>': k = Tok::Gt; break;
            case '<': k = Tok::Lt; break;
            default:
                throw SourceError(ErrorCode::SyntaxError, l, co, std::string("unexpected character '") + c + "'");
            }
        }
        out.push_back({k, std::string(src.substr(i, n)), l, co});
        advance(n);
    }
    out.push_back({Tok::End, "", line, col});
    return out;
}

inline bool is_keyword(std::string_view w) {
    static const std::set<std::string_view> kw = {
        "automaton", "disc", "bool", "input", "cont", "der",  "controllable", "uncontrollable", "location",
        "initial",   "edge", "when", "do",    "goto", "end",  "and",          "or",             "not",
        "true",      "false"};
    return kw.contains(w);
}

// Unresolved syntax tree; names are bound once every automaton is known.

struct RawExpr {
    ExprOp op = ExprOp::True;
    double number = 0.0;
    std::string ref; // dotted reference for leaves
    int line = 0, col = 0;
    std::unique_ptr<RawExpr> lhs, rhs;
};

struct RawAssign {
    std::string target;
    int line = 0, col = 0;
    std::unique_ptr<RawExpr> value;
};

struct RawEdge {
    std::string event;
    int event_line = 0, event_col = 0;
    std::unique_ptr<RawExpr> guard;
    std::vector<RawAssign> updates;
    std::string target;
    int target_line = 0, target_col = 0;
    int line = 0;
};

struct RawLocation {
    std::string name;
    bool initial = false;
    int line = 0, col = 0;
    std::vector<RawEdge> edges;
};

struct RawDecl {
    std::string name;
    int line = 0, col = 0;
    bool initial = false;
    double rate = 1.0;
    bool controllable = false;
};

struct RawAutomaton {
    std::string name;
    int line = 0, col = 0;
    std::vector<RawDecl> discs, inputs, timers, events;
    std::vector<RawLocation> locations;
};

class Parser {
  public:
    explicit Parser(std::vector<Token> toks) : t_(std::move(toks)) {}

    std::vector<RawAutomaton> parse() {
        std::vector<RawAutomaton> out;
        while (!at(Tok::End))
            out.push_back(automaton());
        if (out.empty())
            error(peek(), "expected at least one 'automaton'");
        return out;
    }

  private:
    std::vector<Token> t_;
    std::size_t p_ = 0;

    const Token &peek(std::size_t k = 0) const { return t_[std::min(p_ + k, t_.size() - 1)]; }
    bool at(Tok k) const { return peek().kind == k; }
    bool at_word(std::string_view w) const { return at(Tok::Ident) && peek().text == w; }

    [[noreturn]] static void error(const Token &tk, const std::string &msg) {
        std::string got = tk.kind == Tok::End ? "end of input" : "'" + tk.text + "'";
        throw SourceError(ErrorCode::SyntaxError, tk.line, tk.col, msg + ", got " + got);
    }

    const Token &expect(Tok k, const char *what) {
        if (!at(k))
            error(peek(), std::string("expected ") + what);
        return t_[p_++];
    }

    void expect_word(std::string_view w) {
        if (!at_word(w))
            error(peek(), "expected '" + std::string(w) + "'");
        ++p_;
    }

    bool accept_word(std::string_view w) {
        if (at_word(w)) {
            ++p_;
            return true;
        }
        return false;
    }

    const Token &ident(const char *what) {
        if (!at(Tok::Ident) || is_keyword(peek().text))
            error(peek(), std::string("expected ") + what);
        return t_[p_++];
    }

    std::string dotted(const char *what) {
        std::string s = ident(what).text;
        while (at(Tok::Dot)) {
            ++p_;
            s += '.';
            s += ident(what).text;
        }
        return s;
    }

    RawAutomaton automaton() {
        expect_word("automaton");
        RawAutomaton a;
        a.line = peek().line;
        a.col = peek().col;
        a.name = dotted("automaton name");
        expect(Tok::Colon, "':'");
        for (;;) {
            if (accept_word("disc")) {
                expect_word("bool");
                do {
                    RawDecl d;
                    const auto &tk = ident("variable name");
                    d.name = tk.text;
                    d.line = tk.line;
                    d.col = tk.col;
                    if (at(Tok::Eq)) {
                        ++p_;
                        if (accept_word("true"))
                            d.initial = true;
                        else if (!accept_word("false"))
                            error(peek(), "expected 'true' or 'false'");
                    }
                    a.discs.push_back(std::move(d));
                } while (at(Tok::Comma) && (++p_, true));
                expect(Tok::Semi, "';'");
            } else if (accept_word("input")) {
                expect_word("bool");
                do {
                    RawDecl d;
                    const auto &tk = ident("input name");
                    d.name = tk.text;
                    d.line = tk.line;
                    d.col = tk.col;
                    a.inputs.push_back(std::move(d));
                } while (at(Tok::Comma) && (++p_, true));
                expect(Tok::Semi, "';'");
            } else if (accept_word("cont")) {
                do {
                    RawDecl d;
                    const auto &tk = ident("timer name");
                    d.name = tk.text;
                    d.line = tk.line;
                    d.col = tk.col;
                    if (accept_word("der"))
                        d.rate = std::stod(expect(Tok::Number, "derivative").text);
                    a.timers.push_back(std::move(d));
                } while (at(Tok::Comma) && (++p_, true));
                expect(Tok::Semi, "';'");
            } else if (at_word("controllable") || at_word("uncontrollable")) {
                bool ctrl = peek().text == "controllable";
                ++p_;
                do {
                    RawDecl d;
                    const auto &tk = ident("event name");
                    d.name = tk.text;
                    d.line = tk.line;
                    d.col = tk.col;
                    d.controllable = ctrl;
                    a.events.push_back(std::move(d));
                } while (at(Tok::Comma) && (++p_, true));
                expect(Tok::Semi, "';'");
            } else {
                break;
            }
        }
        while (at_word("location"))
            a.locations.push_back(location());
        if (a.locations.empty())
            error(peek(), "expected 'location'");
        expect_word("end");
        return a;
    }

    RawLocation location() {
        RawLocation l;
        l.line = peek().line;
        l.col = peek().col;
        expect_word("location");
        if (!at(Tok::Colon))
            l.name = ident("location name").text;
        expect(Tok::Colon, "':'");
        if (accept_word("initial")) {
            l.initial = true;
            expect(Tok::Semi, "';'");
        }
        while (at_word("edge"))
            l.edges.push_back(edge());
        return l;
    }

    RawEdge edge() {
        RawEdge e;
        e.line = peek().line;
        expect_word("edge");
        if (at(Tok::Ident) && !is_keyword(peek().text)) {
            e.event_line = peek().line;
            e.event_col = peek().col;
            e.event = dotted("event name");
        }
        if (accept_word("when"))
            e.guard = expr();
        if (accept_word("do")) {
            do {
                RawAssign as;
                as.line = peek().line;
                as.col = peek().col;
                as.target = dotted("assignment target");
                expect(Tok::Assign, "':='");
                as.value = expr();
                e.updates.push_back(std::move(as));
            } while (at(Tok::Comma) && (++p_, true));
        }
        if (accept_word("goto")) {
            e.target_line = peek().line;
            e.target_col = peek().col;
            e.target = ident("location name").text;
        }
        expect(Tok::Semi, "';'");
        return e;
    }

    static std::unique_ptr<RawExpr> node(ExprOp op, const Token &at_tok) {
        auto n = std::make_unique<RawExpr>();
        n->op = op;
        n->line = at_tok.line;
        n->col = at_tok.col;
        return n;
    }

    std::unique_ptr<RawExpr> expr() {
        auto lhs = conj();
        while (at_word("or")) {
            auto n = node(ExprOp::Or, peek());
            ++p_;
            n->lhs = std::move(lhs);
            n->rhs = conj();
            lhs = std::move(n);
        }
        return lhs;
    }

    std::unique_ptr<RawExpr> conj() {
        auto lhs = unary();
        while (at_word("and")) {
            auto n = node(ExprOp::And, peek());
            ++p_;
            n->lhs = std::move(lhs);
            n->rhs = unary();
            lhs = std::move(n);
        }
        return lhs;
    }

    std::unique_ptr<RawExpr> unary() {
        if (at_word("not")) {
            auto n = node(ExprOp::Not, peek());
            ++p_;
            n->lhs = unary();
            return n;
        }
        return comparison();
    }

    std::unique_ptr<RawExpr> comparison() {
        auto lhs = primary();
        std::optional<ExprOp> op;
        switch (peek().kind) {
        case Tok::Eq: op = ExprOp::Eq; break;
        case Tok::Ne: op = ExprOp::Ne; break;
        case Tok::Ge: op = ExprOp::Ge; break;
        case Tok::Le: op = ExprOp::Le; break;
        case Tok::Gt: op = ExprOp::Gt; break;
        case Tok::Lt: op = ExprOp::Lt; break;
        default: break;
        }
        if (!op)
            return lhs;
        auto n = node(*op, peek());
        ++p_;
        n->lhs = std::move(lhs);
        n->rhs = primary();
        return n;
    }

    std::unique_ptr<RawExpr> primary() {
        const auto &tk = peek();
        if (tk.kind == Tok::LParen) {
            ++p_;
            auto e = expr();
            expect(Tok::RParen, "')'");
            return e;
        }
        if (tk.kind == Tok::Number) {
            auto n = node(ExprOp::Number, tk);
            n->number = std::stod(tk.text);
            ++p_;
            return n;
        }
        if (accept_word("true"))
            return node(ExprOp::True, tk);
        if (accept_word("false"))
            return node(ExprOp::False, tk);
        auto n = node(ExprOp::Location, tk); // placeholder; resolved later
        n->ref = dotted("expression");
        return n;
    }
};

} // namespace gts_detail

// ---------------------------------------------------------------------------
// Name resolution
// ---------------------------------------------------------------------------

namespace gts_detail {

class Resolver {
  public:
    explicit Resolver(GtsSpec &spec) : s_(spec) {}

    void build(std::vector<RawAutomaton> &raw) {
        // Declarations first so edges may refer forward.
        for (std::size_t ai = 0; ai < raw.size(); ++ai) {
            auto &ra = raw[ai];
            if (automaton_index_.contains(ra.name))
                throw SourceError(ErrorCode::SyntaxError, ra.line, ra.col, "duplicate automaton '" + ra.name + "'");
            int a = static_cast<int>(s_.automata.size());
            automaton_index_[ra.name] = a;
            GtsAutomaton au;
            au.name = ra.name;
            s_.automata.push_back(std::move(au));
            auto &A = s_.automata.back();
            auto &members = members_[a];

            auto declare = [&](const RawDecl &d, MemberKind k, int idx) {
                if (!members.emplace(d.name, Member{k, idx}).second)
                    throw SourceError(ErrorCode::SyntaxError, d.line, d.col,
                                      "duplicate declaration '" + d.name + "' in " + ra.name);
            };
            for (const auto &d : ra.discs) {
                int idx = static_cast<int>(s_.discs.size());
                declare(d, MemberKind::Disc, idx);
                s_.discs.push_back({d.name, a, d.initial});
                A.discs.push_back(idx);
            }
            for (const auto &d : ra.inputs) {
                int idx = static_cast<int>(s_.inputs.size());
                declare(d, MemberKind::Input, idx);
                s_.inputs.push_back({d.name, a});
                A.inputs.push_back(idx);
            }
            for (const auto &d : ra.timers) {
                int idx = static_cast<int>(s_.timers.size());
                declare(d, MemberKind::Timer, idx);
                s_.timers.push_back({d.name, a, d.rate});
                A.timers.push_back(idx);
            }
            for (const auto &d : ra.events) {
                int idx = static_cast<int>(s_.events.size());
                declare(d, MemberKind::Event, idx);
                s_.events.push_back({d.name, a, d.controllable, {}});
                A.events.push_back(idx);
            }
            int initial_count = 0;
            for (std::size_t li = 0; li < ra.locations.size(); ++li) {
                const auto &rl = ra.locations[li];
                int idx = static_cast<int>(s_.locations.size());
                if (!rl.name.empty()) {
                    RawDecl d;
                    d.name = rl.name;
                    d.line = rl.line;
                    d.col = rl.col;
                    declare(d, MemberKind::Location, idx);
                } else if (ra.locations.size() > 1) {
                    throw SourceError(ErrorCode::SyntaxError, rl.line, rl.col,
                                      "anonymous location only allowed when it is the only one");
                }
                s_.locations.push_back({rl.name, a});
                A.locations.push_back(idx);
                if (rl.initial) {
                    ++initial_count;
                    A.initial_location = idx;
                }
            }
            if (initial_count != 1)
                throw SourceError(ErrorCode::SyntaxError, ra.line, ra.col,
                                  "automaton '" + ra.name + "' needs exactly one initial location, has " +
                                      std::to_string(initial_count));
        }

        for (std::size_t ai = 0; ai < raw.size(); ++ai) {
            int a = static_cast<int>(ai);
            for (std::size_t li = 0; li < raw[ai].locations.size(); ++li) {
                int loc = s_.automata[ai].locations[li];
                for (auto &re : raw[ai].locations[li].edges)
                    edge(a, loc, re);
            }
        }
    }

  private:
    enum class MemberKind { Disc, Input, Timer, Event, Location };
    struct Member {
        MemberKind kind;
        int index;
    };

    GtsSpec &s_;
    std::unordered_map<std::string, int> automaton_index_;
    std::map<int, std::unordered_map<std::string, Member>> members_;

    std::optional<Member> lookup(int owner, const std::string &ref) const {
        auto dot = ref.rfind('.');
        if (dot == std::string::npos) {
            const auto &m = members_.at(owner);
            auto it = m.find(ref);
            if (it == m.end())
                return std::nullopt;
            return it->second;
        }
        auto ai = automaton_index_.find(ref.substr(0, dot));
        if (ai == automaton_index_.end())
            return std::nullopt;
        const auto &m = members_.at(ai->second);
        auto it = m.find(ref.substr(dot + 1));
        if (it == m.end())
            return std::nullopt;
        return it->second;
    }

    [[noreturn]] static void undeclared(int line, int col, const std::string &ref) {
        throw SourceError(ErrorCode::UndeclaredIdentifier, line, col, "'" + ref + "' is not declared");
    }

    std::unique_ptr<Expr> expr(int owner, const gts_detail::RawExpr &r) {
        auto e = std::make_unique<Expr>();
        e->op = r.op;
        switch (r.op) {
        case ExprOp::True:
        case ExprOp::False: return e;
        case ExprOp::Number: e->number = r.number; e->is_real = true; return e;
        case ExprOp::Not:
            e->lhs = expr(owner, *r.lhs);
            require_bool(*e->lhs, r, "operand of 'not'");
            return e;
        case ExprOp::And:
        case ExprOp::Or:
            e->lhs = expr(owner, *r.lhs);
            e->rhs = expr(owner, *r.rhs);
            require_bool(*e->lhs, r, "operand of 'and'/'or'");
            require_bool(*e->rhs, r, "operand of 'and'/'or'");
            return e;
        case ExprOp::Eq:
        case ExprOp::Ne:
        case ExprOp::Ge:
        case ExprOp::Le:
        case ExprOp::Gt:
        case ExprOp::Lt: {
            e->lhs = expr(owner, *r.lhs);
            e->rhs = expr(owner, *r.rhs);
            if (e->lhs->is_real != e->rhs->is_real)
                throw SourceError(ErrorCode::SyntaxError, r.line, r.col, "comparison mixes boolean and real operands");
            bool ordering = r.op != ExprOp::Eq && r.op != ExprOp::Ne;
            if (ordering && !e->lhs->is_real)
                throw SourceError(ErrorCode::SyntaxError, r.line, r.col, "ordering comparison needs real operands");
            return e;
        }
        default: break;
        }
        // Leaf reference.
        auto m = lookup(owner, r.ref);
        if (!m)
            undeclared(r.line, r.col, r.ref);
        e->index = m->index;
        switch (m->kind) {
        case MemberKind::Disc: e->op = ExprOp::Disc; break;
        case MemberKind::Input: e->op = ExprOp::Input; break;
        case MemberKind::Timer: e->op = ExprOp::Timer; e->is_real = true; break;
        case MemberKind::Location: e->op = ExprOp::Location; break;
        case MemberKind::Event:
            throw SourceError(ErrorCode::SyntaxError, r.line, r.col, "event '" + r.ref + "' used as a value");
        }
        return e;
    }

    static void require_bool(const Expr &e, const gts_detail::RawExpr &r, const char *what) {
        if (e.is_real)
            throw SourceError(ErrorCode::SyntaxError, r.line, r.col, std::string(what) + " must be boolean");
    }

    void edge(int owner, int loc, gts_detail::RawEdge &re) {
        GtsEdge e;
        e.owner = owner;
        e.location = loc;
        e.line = re.line;
        if (!re.event.empty()) {
            auto m = lookup(owner, re.event);
            if (!m)
                undeclared(re.event_line, re.event_col, re.event);
            if (m->kind != MemberKind::Event)
                throw SourceError(ErrorCode::SyntaxError, re.event_line, re.event_col,
                                  "'" + re.event + "' is not an event");
            e.event = m->index;
            auto &parts = s_.events[static_cast<std::size_t>(m->index)].participants;
            if (std::find(parts.begin(), parts.end(), owner) == parts.end())
                parts.push_back(owner);
        }
        if (re.guard) {
            e.guard = expr(owner, *re.guard);
            if (e.guard->is_real)
                throw SourceError(ErrorCode::SyntaxError, re.guard->line, re.guard->col, "guard must be boolean");
        }
        std::set<std::pair<bool, int>> assigned;
        for (auto &ra : re.updates) {
            auto m = lookup(owner, ra.target);
            if (!m)
                undeclared(ra.line, ra.col, ra.target);
            if (m->kind == MemberKind::Input)
                throw SourceError(ErrorCode::AssignToInput, ra.line, ra.col,
                                  "'" + ra.target + "' is an input and cannot be assigned");
            if (m->kind != MemberKind::Disc && m->kind != MemberKind::Timer)
                throw SourceError(ErrorCode::SyntaxError, ra.line, ra.col, "'" + ra.target + "' is not assignable");
            bool timer = m->kind == MemberKind::Timer;
            int owner_of = timer ? s_.timers[static_cast<std::size_t>(m->index)].owner
                                 : s_.discs[static_cast<std::size_t>(m->index)].owner;
            if (owner_of != owner)
                throw SourceError(ErrorCode::SyntaxError, ra.line, ra.col,
                                  "'" + ra.target + "' belongs to another automaton");
            if (!assigned.insert({timer, m->index}).second)
                throw SourceError(ErrorCode::SyntaxError, ra.line, ra.col, "'" + ra.target + "' assigned twice");
            Assignment as;
            as.to_timer = timer;
            as.target = m->index;
            as.value = expr(owner, *ra.value);
            if (as.value->is_real != timer)
                throw SourceError(ErrorCode::SyntaxError, ra.line, ra.col,
                                  timer ? "timer needs a real value" : "boolean variable needs a boolean value");
            e.updates.push_back(std::move(as));
        }
        if (!re.target.empty()) {
            const auto &m = members_.at(owner);
            auto it = m.find(re.target);
            if (it == m.end() || it->second.kind != MemberKind::Location)
                undeclared(re.target_line, re.target_col, re.target);
            e.target = it->second.index;
        }
        int idx = static_cast<int>(s_.edges.size());
        s_.edges.push_back(std::move(e));
        s_.automata[static_cast<std::size_t>(owner)].edges.push_back(idx);
    }
};

} // namespace gts_detail

inline GtsSpec parse_gts(std::string_view text) {
    auto raw = gts_detail::Parser(gts_detail::lex(text)).parse();
    GtsSpec spec;
    gts_detail::Resolver(spec).build(raw);
    return spec;
}

// ---------------------------------------------------------------------------
// Runtime
// ---------------------------------------------------------------------------

struct GtsState {
    std::vector<int> location; // per automaton, global location index
    std::vector<char> disc;
    std::vector<double> timer;
    std::uint64_t scans = 0;

    friend bool operator==(const GtsState &, const GtsState &) = default;
};

struct LivelockInfo {
    std::string edge;
    int cap = 0;
};

struct ScanReport {
    std::vector<std::string> edges_fired; // edge ids in firing order (sync partners included)
    std::vector<std::string> outputs_changed;
    int iterations = 0;
    std::optional<LivelockInfo> livelock;
};

inline constexpr int kDefaultIterationCap = 10000;

inline GtsState initial_state(const GtsSpec &spec) {
    GtsState s;
    for (const auto &a : spec.automata)
        s.location.push_back(a.initial_location);
    for (const auto &d : spec.discs)
        s.disc.push_back(d.initial ? 1 : 0);
    s.timer.assign(spec.timers.size(), 0.0);
    return s;
}

namespace gts_detail {

struct Eval {
    const GtsState &st;
    const std::vector<char> &inputs;
    const GtsSpec &spec;

    double real(const Expr &e) const {
        switch (e.op) {
        case ExprOp::Number: return e.number;
        case ExprOp::Timer: return st.timer[static_cast<std::size_t>(e.index)];
        default: return 0.0;
        }
    }

    bool boolean(const Expr &e) const {
        switch (e.op) {
        case ExprOp::True: return true;
        case ExprOp::False: return false;
        case ExprOp::Disc: return st.disc[static_cast<std::size_t>(e.index)] != 0;
        case ExprOp::Input: return inputs[static_cast<std::size_t>(e.index)] != 0;
        case ExprOp::Location: {
            int owner = spec.locations[static_cast<std::size_t>(e.index)].owner;
            return st.location[static_cast<std::size_t>(owner)] == e.index;
        }
        case ExprOp::Not: return !boolean(*e.lhs);
        case ExprOp::And: return boolean(*e.lhs) && boolean(*e.rhs);
        case ExprOp::Or: return boolean(*e.lhs) || boolean(*e.rhs);
        case ExprOp::Eq:
            return e.lhs->is_real ? real(*e.lhs) == real(*e.rhs) : boolean(*e.lhs) == boolean(*e.rhs);
        case ExprOp::Ne:
            return e.lhs->is_real ? real(*e.lhs) != real(*e.rhs) : boolean(*e.lhs) != boolean(*e.rhs);
        case ExprOp::Ge: return real(*e.lhs) >= real(*e.rhs);
        case ExprOp::Le: return real(*e.lhs) <= real(*e.rhs);
        case ExprOp::Gt: return real(*e.lhs) > real(*e.rhs);
        case ExprOp::Lt: return real(*e.lhs) < real(*e.rhs);
        default: return false;
        }
    }
};

} // namespace gts_detail

/// A controller instance: spec plus state, with scan-level execution.
/// Inputs are addressed by index (spec.inputs order) on the hot path and by
/// PLC name through the convenience overload.
class GtsController {
  public:
    explicit GtsController(std::shared_ptr<const GtsSpec> spec, int iteration_cap = kDefaultIterationCap)
        : spec_(std::move(spec)), state_(initial_state(*spec_)), cap_(iteration_cap) {
        inputs_.assign(spec_->inputs.size(), 0);
        for (std::size_t i = 0; i < spec_->inputs.size(); ++i)
            input_index_.emplace(spec_->input_plc_name(static_cast<int>(i)), i);
        for (std::size_t d = 0; d < spec_->discs.size(); ++d)
            disc_names_.push_back(spec_->disc_plc_name(static_cast<int>(d)));
        last_outputs_ = state_.disc;
    }

    explicit GtsController(GtsSpec spec, int iteration_cap = kDefaultIterationCap)
        : GtsController(std::make_shared<const GtsSpec>(std::move(spec)), iteration_cap) {}

    [[nodiscard]] const GtsSpec &spec() const { return *spec_; }
    [[nodiscard]] const GtsState &state() const { return state_; }
    void set_state(GtsState s) { state_ = std::move(s); }

    [[nodiscard]] std::vector<std::string> input_names() const {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < spec_->inputs.size(); ++i)
            out.push_back(spec_->input_plc_name(static_cast<int>(i)));
        return out;
    }

    [[nodiscard]] const std::vector<std::string> &output_names() const { return disc_names_; }

    /// Restrict published outputs to these PLC names (the manifest's
    /// Actuators); unset means every discrete variable is an output.
    void set_output_filter(const std::set<std::string> &names) {
        filter_ = std::vector<char>(disc_names_.size(), 0);
        for (std::size_t d = 0; d < disc_names_.size(); ++d)
            (*filter_)[d] = names.contains(disc_names_[d]) ? 1 : 0;
    }

    [[nodiscard]] bool is_output(std::size_t d) const { return !filter_ || (*filter_)[d]; }

    /// Current output image: PLC name -> value.
    [[nodiscard]] std::map<std::string, bool> outputs() const {
        std::map<std::string, bool> out;
        for (std::size_t d = 0; d < disc_names_.size(); ++d)
            if (is_output(d))
                out.emplace(disc_names_[d], state_.disc[d] != 0);
        return out;
    }

    [[nodiscard]] bool disc_value(std::string_view qualified) const {
        for (std::size_t d = 0; d < spec_->discs.size(); ++d)
            if (spec_->qualified(spec_->discs[d].owner, spec_->discs[d].name) == qualified)
                return state_.disc[d] != 0;
        throw Error(ErrorCode::UndeclaredIdentifier, std::string(qualified));
    }

    [[nodiscard]] std::string location_of(std::string_view automaton) const {
        for (std::size_t a = 0; a < spec_->automata.size(); ++a)
            if (spec_->automata[a].name == automaton)
                return spec_->locations[static_cast<std::size_t>(state_.location[a])].name;
        throw Error(ErrorCode::UndeclaredIdentifier, std::string(automaton));
    }

    ScanReport scan(const std::map<std::string, bool> &inputs, double dt) {
        std::vector<char> image(spec_->inputs.size(), 0);
        std::vector<char> seen(spec_->inputs.size(), 0);
        for (const auto &[name, v] : inputs) {
            auto it = input_index_.find(name);
            if (it != input_index_.end()) {
                image[it->second] = v ? 1 : 0;
                seen[it->second] = 1;
            }
        }
        for (std::size_t i = 0; i < seen.size(); ++i)
            if (!seen[i])
                throw Error(ErrorCode::InputMissing, spec_->input_plc_name(static_cast<int>(i)));
        return scan_image(image, dt);
    }

    /// `image` holds one value per declared input, in declaration order.
    ScanReport scan_image(const std::vector<char> &image, double dt) {
        if (image.size() != spec_->inputs.size())
            throw Error(ErrorCode::InputMissing, "input image has " + std::to_string(image.size()) +
                                                     " entries, spec declares " +
                                                     std::to_string(spec_->inputs.size()));
        const auto &spec = *spec_;
        ScanReport rep;
        for (std::size_t i = 0; i < spec.timers.size(); ++i)
            state_.timer[i] += spec.timers[i].rate * dt;
        inputs_ = image;

        for (;;) {
            int fired = fire_first_enabled(rep);
            if (fired < 0)
                break;
            ++rep.iterations;
            if (rep.iterations >= cap_) {
                rep.livelock = LivelockInfo{spec.edge_id(fired), cap_};
                break;
            }
        }
        ++state_.scans;
        for (std::size_t d = 0; d < state_.disc.size(); ++d) {
            if (is_output(d) && state_.disc[d] != last_outputs_[d])
                rep.outputs_changed.push_back(disc_names_[d]);
        }
        last_outputs_ = state_.disc;
        return rep;
    }

  private:
    std::shared_ptr<const GtsSpec> spec_;
    GtsState state_;
    int cap_;
    std::vector<char> inputs_;
    std::unordered_map<std::string, std::size_t> input_index_;
    std::vector<std::string> disc_names_;
    std::vector<char> last_outputs_;
    std::optional<std::vector<char>> filter_;

    bool guard_true(const GtsEdge &e, const gts_detail::Eval &ev) const {
        if (state_.location[static_cast<std::size_t>(e.owner)] != e.location)
            return false;
        return !e.guard || ev.boolean(*e.guard);
    }

    /// First enabled edge of `automaton` on `event` in its current location.
    int enabled_on_event(int automaton, int event, const gts_detail::Eval &ev) const {
        for (int ei : spec_->automata[static_cast<std::size_t>(automaton)].edges) {
            const auto &e = spec_->edges[static_cast<std::size_t>(ei)];
            if (e.event == event && guard_true(e, ev))
                return ei;
        }
        return -1;
    }

    /// Fires the first enabled edge (with its synchronisation partners) and
    /// returns its index, or -1 at fixpoint.
    int fire_first_enabled(ScanReport &rep) {
        const auto &spec = *spec_;
        gts_detail::Eval ev{state_, inputs_, spec};
        for (std::size_t ei = 0; ei < spec.edges.size(); ++ei) {
            const auto &e = spec.edges[ei];
            if (!guard_true(e, ev))
                continue;
            std::vector<int> group;
            if (e.event < 0) {
                group.push_back(static_cast<int>(ei));
            } else {
                bool ok = true;
                for (int a : spec.events[static_cast<std::size_t>(e.event)].participants) {
                    int pe = a == e.owner ? static_cast<int>(ei) : enabled_on_event(a, e.event, ev);
                    if (pe < 0) {
                        ok = false;
                        break;
                    }
                    group.push_back(pe);
                }
                if (!ok)
                    continue;
            }
            apply(group, ev);
            for (int g : group)
                rep.edges_fired.push_back(spec.edge_id(g));
            return static_cast<int>(ei);
        }
        return -1;
    }

    void apply(const std::vector<int> &group, const gts_detail::Eval &ev) {
        // Right-hand sides all see the pre-transition state.
        std::vector<std::pair<const Assignment *, double>> pending;
        for (int g : group) {
            for (const auto &as : spec_->edges[static_cast<std::size_t>(g)].updates)
                pending.emplace_back(&as, as.to_timer ? ev.real(*as.value) : (ev.boolean(*as.value) ? 1.0 : 0.0));
        }
        for (auto &[as, v] : pending) {
            if (as->to_timer)
                state_.timer[static_cast<std::size_t>(as->target)] = v < 0.0 ? 0.0 : v;
            else
                state_.disc[static_cast<std::size_t>(as->target)] = v != 0.0 ? 1 : 0;
        }
        for (int g : group) {
            const auto &e = spec_->edges[static_cast<std::size_t>(g)];
            if (e.target >= 0)
                state_.location[static_cast<std::size_t>(e.owner)] = e.target;
        }
    }
};

} // namespace tunneltwin
