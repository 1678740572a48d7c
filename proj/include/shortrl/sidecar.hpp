// SPDX-License-Identifier: Apache-2.0
#pragma once

/*
    sidecar.hpp - newline-delimited JSON reward-scoring service.

    Every connection (or the stdio stream) starts with the server line
        {"proto":1}
    followed by one response line per request line:

        {"op":"open","id":1,"config":{"variant":"short_rl","tau_len":200}}
        {"op":"score","id":2,"session_id":"s1","groups":[...]}
        {"op":"close","id":3,"session_id":"s1"}

    Responses echo "id" and carry either "ok":true plus the result fields
    (session_id, a reward payload, or the final tracker) or
    "ok":false plus "error". Errors never close the connection and never
    change session state.

    Sessions are shared across connections. Scoring within a session is
    serialized by a per-session mutex; different sessions run in parallel.
*/

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "shortrl/harness/config.hpp"
#include "shortrl/harness/scoring.hpp"
#include "shortrl/shaping.hpp"
#include "shortrl/stability_gate.hpp"

namespace shortrl::sidecar {

using ojson = nlohmann::ordered_json;

inline constexpr int kProtocolVersion = 1;

inline std::string hello_line() {
    ojson j;
    j["proto"] = kProtocolVersion;
    return j.dump();
}

/// ShaperConfig from an "open" config object. Collects every field problem.
inline ShaperConfig shaper_from_json(const ojson& j, std::vector<std::string>& errors) {
    ShaperConfig cfg;
    if (!j.is_object()) {
        errors.emplace_back("config must be a JSON object");
        return cfg;
    }
    if (auto it = j.find("preset"); it != j.end()) {
        const auto* p = it->is_string() ? harness::find_preset(it->get<std::string>()) : nullptr;
        if (p) {
            cfg.tau_len = p->tau_len;
            cfg.tau_acc = p->tau_acc;
            cfg.alpha = p->alpha;
        } else {
            errors.emplace_back("preset: unknown preset");
        }
    }
    const auto number = [&](const char* key, double& out) {
        if (auto it = j.find(key); it != j.end()) {
            if (it->is_number()) out = it->get<double>();
            else errors.push_back(std::string(key) + " must be a number");
        }
    };
    const auto integer = [&](const char* key, std::int64_t& out) {
        if (auto it = j.find(key); it != j.end()) {
            if (it->is_number_integer()) out = it->get<std::int64_t>();
            else errors.push_back(std::string(key) + " must be an integer");
        }
    };
    const auto boolean = [&](const char* key, bool& out) {
        if (auto it = j.find(key); it != j.end()) {
            if (it->is_boolean()) out = it->get<bool>();
            else errors.push_back(std::string(key) + " must be a boolean");
        }
    };

    if (auto it = j.find("variant"); it != j.end()) {
        const auto v = it->is_string() ? parse_variant(it->get<std::string>()) : std::nullopt;
        if (v) cfg.variant = *v;
        else errors.push_back("variant must be one of: " + allowed_variants());
    }
    number("alpha", cfg.alpha);
    integer("tau_len", cfg.tau_len);
    number("tau_acc", cfg.tau_acc);
    boolean("gate_right", cfg.gates.right);
    boolean("gate_slack", cfg.gates.slack);
    boolean("gate_stable", cfg.gates.stable);
    if (auto it = j.find("ablation"); it != j.end()) {
        const auto a = it->is_string() ? harness::parse_ablation(it->get<std::string>()) : std::nullopt;
        if (a) cfg.gates = harness::gates_for(*a);
        else errors.emplace_back("ablation must be one of: d1_only, d1_d2, d1_d3, full");
    }
    number("efficient_sigma", cfg.efficient_sigma);
    boolean("efficient_apply_to_incorrect", cfg.efficient_apply_to_incorrect);
    integer("thinkprune_limit", cfg.thinkprune_limit);
    if (auto it = j.find("thinkprune_mode"); it != j.end()) {
        const auto m = it->is_string() ? parse_thinkprune_mode(it->get<std::string>()) : std::nullopt;
        if (m) cfg.thinkprune_mode = *m;
        else errors.emplace_back("thinkprune_mode must be one of: hard, cosine");
    }
    integer("thinkprune_ramp", cfg.thinkprune_ramp);

    static const std::vector<std::string> known = {
        "preset", "variant", "alpha", "tau_len", "tau_acc", "gate_right", "gate_slack",
        "gate_stable", "ablation", "efficient_sigma", "efficient_apply_to_incorrect",
        "thinkprune_limit", "thinkprune_mode", "thinkprune_ramp"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            errors.push_back("unknown config field '" + key + "'");
        }
    }
    if (errors.empty()) {
        for (auto& p : cfg.problems()) errors.push_back(std::move(p));
    }
    return cfg;
}

struct Session {
    std::string id;
    ShaperConfig config;
    AccuracyTracker tracker;
    std::mutex mu;
};

/// Protocol state machine. handle() is safe to call from many threads.
class Service {
public:
    explicit Service(std::size_t max_sessions = 1024) : max_sessions_(max_sessions) {}

    /// One request line in, one response line out (no trailing newline).
    std::string handle(const std::string& line) {
        ojson req;
        try {
            req = ojson::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            return error(nullptr, "malformed request: invalid JSON");
        }
        if (!req.is_object()) return error(nullptr, "malformed request: expected a JSON object");
        const ojson id = req.contains("id") ? req["id"] : ojson(nullptr);
        const auto op = req.find("op");
        if (op == req.end() || !op->is_string()) return error(id, "malformed request: missing op");
        const auto name = op->get<std::string>();
        try {
            if (name == "open") return ok(id, open(req));
            if (name == "score") return ok(id, score(req));
            if (name == "close") return ok(id, close(req));
        } catch (const RequestError& e) {
            return error(id, e.what());
        } catch (const InputError& e) {
            return error(id, e.what());
        } catch (const ConfigError& e) {
            return error(id, e.what());
        }
        return error(id, "unknown op '" + name + "' (allowed: open, score, close)");
    }

    [[nodiscard]] std::size_t session_count() const {
        std::lock_guard lk(mu_);
        return sessions_.size();
    }

private:
    struct RequestError : std::runtime_error {
        using std::runtime_error::runtime_error;
    };

    static std::string ok(const ojson& id, const ojson& result) {
        ojson r;
        r["id"] = id;
        r["ok"] = true;
        for (const auto& [k, v] : result.items()) r[k] = v;
        return r.dump();
    }

    static std::string error(const ojson& id, const std::string& msg) {
        ojson r;
        r["id"] = id;
        r["ok"] = false;
        r["error"] = msg;
        return r.dump();
    }

    std::shared_ptr<Session> lookup(const ojson& req) const {
        const auto sid = req.find("session_id");
        if (sid == req.end() || !sid->is_string()) throw RequestError("session_id must be a string");
        std::lock_guard lk(mu_);
        const auto it = sessions_.find(sid->get<std::string>());
        if (it == sessions_.end()) throw RequestError("unknown session '" + sid->get<std::string>() + "'");
        return it->second;
    }

    ojson open(const ojson& req) {
        std::vector<std::string> errors;
        const auto cfg = shaper_from_json(req.contains("config") ? req["config"] : ojson::object(), errors);
        AccuracyTracker tracker;
        if (auto am = req.find("acc_max"); am != req.end()) {
            if (am->is_number() && am->get<double>() >= 0.0 && am->get<double>() <= 1.0) {
                tracker.acc_max = am->get<double>();
            } else {
                errors.emplace_back("acc_max must be a number in [0, 1]");
            }
        }
        if (!errors.empty()) throw RequestError(harness::detail::join_lines(errors));

        auto s = std::make_shared<Session>();
        s->config = cfg;
        s->tracker = tracker;
        {
            std::lock_guard lk(mu_);
            if (sessions_.size() >= max_sessions_) {
                throw RequestError("session limit reached (" + std::to_string(max_sessions_) + ")");
            }
            s->id = "s" + std::to_string(++next_id_);
            sessions_.emplace(s->id, s);
        }
        ojson r;
        r["session_id"] = s->id;
        return r;
    }

    ojson score(const ojson& req) {
        auto s = lookup(req);
        const auto groups_it = req.find("groups");
        if (groups_it == req.end()) throw RequestError("groups must be an array");
        const auto groups = harness::groups_from_json(*groups_it);
        std::lock_guard lk(s->mu);
        auto outcome = harness::score_batch(groups, s->config, s->tracker);
        s->tracker = outcome.tracker;
        return std::move(outcome.payload);
    }

    ojson close(const ojson& req) {
        auto s = lookup(req);
        {
            std::lock_guard lk(mu_);
            if (sessions_.erase(s->id) == 0) throw RequestError("unknown session '" + s->id + "'");
        }
        std::lock_guard lk(s->mu);
        return harness::tracker_to_json(s->tracker);
    }

    std::size_t max_sessions_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t next_id_ = 0;
};

/// Serves one line stream until EOF.
inline void serve_stream(Service& svc, std::istream& in, std::ostream& out) {
    out << hello_line() << '\n' << std::flush;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        out << svc.handle(line) << '\n' << std::flush;
    }
}

struct ListenAddress {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
};

inline ListenAddress parse_listen(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos) throw ConfigError("--listen expects HOST:PORT, got '" + text + "'");
    const auto port = harness::detail::to_int<std::uint16_t>(text.substr(colon + 1));
    if (!port) throw ConfigError("--listen: bad port in '" + text + "'");
    return {text.substr(0, colon), *port};
}

/// Blocking TCP server, one thread per connection.
class TcpServer {
public:
    TcpServer(Service& svc, const ListenAddress& addr) : svc_(svc) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
        int yes = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
        sockaddr_in sa{};
        sa.sin_family = AF_INET;
        sa.sin_port = htons(addr.port);
        const std::string host = addr.host == "localhost" ? "127.0.0.1" : addr.host;
        if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1) {
            ::close(fd_);
            throw ConfigError("--listen: bad IPv4 address '" + addr.host + "'");
        }
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0 || ::listen(fd_, 64) != 0) {
            const std::string msg = std::strerror(errno);
            ::close(fd_);
            throw std::runtime_error("bind " + addr.host + ":" + std::to_string(addr.port) + ": " + msg);
        }
        socklen_t len = sizeof(sa);
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len);
        port_ = ntohs(sa.sin_port);
    }

    TcpServer(const TcpServer&) = delete;
    TcpServer& operator=(const TcpServer&) = delete;

    ~TcpServer() {
        stop();
        for (auto& t : workers_) {
            if (t.joinable()) t.join();
        }
    }

    [[nodiscard]] std::uint16_t port() const noexcept { return port_; }

    /// Accepts until stop() is called.
    void run() {
        while (!stopping_) {
            const int c = ::accept(fd_, nullptr, nullptr);
            if (c < 0) {
                if (stopping_) break;
                if (errno == EINTR) continue;
                break;
            }
            std::lock_guard lk(mu_);
            workers_.emplace_back([this, c] { serve_connection(c); });
        }
    }

    void stop() {
        if (stopping_.exchange(true)) return;
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        std::lock_guard lk(mu_);
        for (int c : open_) ::shutdown(c, SHUT_RDWR);
    }

private:
    static bool send_all(int c, const std::string& s) {
        std::size_t off = 0;
        while (off < s.size()) {
            const auto n = ::send(c, s.data() + off, s.size() - off, MSG_NOSIGNAL);
            if (n <= 0) return false;
            off += static_cast<std::size_t>(n);
        }
        return true;
    }

    void serve_connection(int c) {
        {
            std::lock_guard lk(mu_);
            open_.push_back(c);
        }
        std::string buf;
        char chunk[4096];
        bool alive = send_all(c, hello_line() + "\n");
        while (alive) {
            const auto n = ::recv(c, chunk, sizeof(chunk), 0);
            if (n <= 0) break;
            buf.append(chunk, static_cast<std::size_t>(n));
            std::size_t pos;
            while (alive && (pos = buf.find('\n')) != std::string::npos) {
                std::string line = buf.substr(0, pos);
                buf.erase(0, pos + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (line.empty()) continue;
                alive = send_all(c, svc_.handle(line) + "\n");
            }
        }
        {
            std::lock_guard lk(mu_);
            open_.erase(std::remove(open_.begin(), open_.end(), c), open_.end());
        }
        ::close(c);
    }

    Service& svc_;
    int fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::mutex mu_;
    std::vector<std::thread> workers_;
    std::vector<int> open_;
};

}  // namespace shortrl::sidecar
