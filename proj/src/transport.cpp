#include "gfwlab/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>

namespace gfwlab {

namespace {

Timestamp steady_now()
{
    return std::chrono::duration_cast<Timestamp>(std::chrono::steady_clock::now().time_since_epoch());
}

sockaddr_storage resolve(const Endpoint& ep, socklen_t& len)
{
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_DGRAM;
    hints.ai_flags = AI_NUMERICSERV;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(ep.port);
    if (int rc = getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res); rc != 0)
        throw TransportError("cannot resolve " + ep.str() + ": " + gai_strerror(rc));
    sockaddr_storage out{};
    std::memcpy(&out, res->ai_addr, res->ai_addrlen);
    len = res->ai_addrlen;
    freeaddrinfo(res);
    return out;
}

int poll_timeout_ms(Timestamp remaining)
{
    if (remaining <= Timestamp::zero())
        return 0;
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(remaining).count();
    return static_cast<int>(std::clamp<long long>(ms + 1, 1, 1000));
}

} // namespace

SimTransport::SimTransport(PathConfig config) : sim_(std::move(config)) {}

DnsQuery SimTransport::send(DnsQuery q)
{
    q.sent_at = now_;
    // The injector sees the query as it appears on the wire.
    DnsQuery seen = decode_query(encode_query(q));
    seen.sent_at = q.sent_at;
    for (auto& r : sim_.on_query(seen)) {
        const auto bytes = encode_response(r);
        WireResponse parsed = decode_response(bytes, TransportMeta{r.df_flag, r.received_at});
        parsed.ground_truth_forged = r.ground_truth_forged;
        pending_.push({r.received_at, seq_++, std::move(parsed)});
    }
    return q;
}

std::vector<WireResponse> SimTransport::poll_some(Timestamp until)
{
    if (!pending_.empty() && pending_.top().at < until)
        until = std::max(now_, pending_.top().at);
    return poll(until);
}

std::vector<WireResponse> SimTransport::poll(Timestamp until)
{
    std::vector<WireResponse> out;
    now_ = std::max(now_, until);
    while (!pending_.empty() && pending_.top().at <= now_) {
        out.push_back(pending_.top().response);
        pending_.pop();
    }
    return out;
}

StaticResponder::StaticResponder(std::map<std::string, std::vector<DnsAnswer>> records, Options options)
    : records_(std::move(records)), options_(std::move(options))
{
}

DnsQuery StaticResponder::send(DnsQuery q)
{
    q.sent_at = now_;
    if (options_.silent)
        return q;
    WireResponse r;
    r.txid = q.txid;
    r.qname = q.qname;
    r.qtype = q.qtype;
    r.aa_flag = options_.authoritative;
    r.received_at = now_ + from_ms(options_.delay_ms);
    if (auto it = records_.find(q.qname.str()); it != records_.end()) {
        for (const auto& ans : it->second) {
            const bool fits = ans.rr.index() == 2 || (q.qtype == QType::A) == (ans.rr.index() == 0);
            if (fits)
                r.answers.push_back(ans);
        }
    } else {
        r.rcode = 3;
    }
    auto parsed = decode_response(encode_response(r), TransportMeta{std::nullopt, r.received_at});
    pending_.push_back(std::move(parsed));
    return q;
}

std::vector<WireResponse> StaticResponder::poll(Timestamp until)
{
    now_ = std::max(now_, until);
    std::vector<WireResponse> out;
    auto ready = std::stable_partition(pending_.begin(), pending_.end(),
                                       [&](const WireResponse& r) { return r.received_at <= now_; });
    out.assign(std::make_move_iterator(pending_.begin()), std::make_move_iterator(ready));
    pending_.erase(pending_.begin(), ready);
    std::stable_sort(out.begin(), out.end(),
                     [](const WireResponse& a, const WireResponse& b) { return a.received_at < b.received_at; });
    return out;
}

Endpoint Endpoint::parse(std::string_view text)
{
    Endpoint ep;
    std::string s(text);
    if (s.empty())
        throw std::invalid_argument("empty endpoint");
    std::string port;
    if (s.front() == '[') {
        const auto close = s.find(']');
        if (close == std::string::npos)
            throw std::invalid_argument("bad endpoint '" + s + "'");
        ep.host = s.substr(1, close - 1);
        if (close + 1 < s.size()) {
            if (s[close + 1] != ':')
                throw std::invalid_argument("bad endpoint '" + s + "'");
            port = s.substr(close + 2);
        }
    } else if (const auto colon = s.rfind(':'); colon != std::string::npos && s.find(':') == colon) {
        ep.host = s.substr(0, colon);
        port = s.substr(colon + 1);
    } else {
        ep.host = s;
    }
    if (!port.empty()) {
        std::size_t used = 0;
        const int p = std::stoi(port, &used);
        if (used != port.size() || p < 0 || p > 65535)
            throw std::invalid_argument("bad port in '" + s + "'");
        ep.port = static_cast<std::uint16_t>(p);
    }
    if (ep.host.empty())
        throw std::invalid_argument("bad endpoint '" + s + "'");
    return ep;
}

std::string Endpoint::str() const
{
    if (host.find(':') != std::string::npos)
        return "[" + host + "]:" + std::to_string(port);
    return host + ":" + std::to_string(port);
}

UdpTransport::UdpTransport(const Endpoint& target) : target_(target)
{
    socklen_t len = 0;
    const auto addr = resolve(target, len);
    fd_ = ::socket(addr.ss_family, SOCK_DGRAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0);
    if (fd_ < 0)
        throw TransportError(std::string("socket: ") + std::strerror(errno));
    if (::connect(fd_, reinterpret_cast<const sockaddr*>(&addr), len) != 0) {
        const int err = errno;
        ::close(fd_);
        throw TransportError("connect " + target.str() + ": " + std::strerror(err));
    }
}

UdpTransport::~UdpTransport()
{
    if (fd_ >= 0)
        ::close(fd_);
}

Timestamp UdpTransport::now() const
{
    return steady_now();
}

DnsQuery UdpTransport::send(DnsQuery q)
{
    const auto bytes = encode_query(q);
    q.sent_at = now();
    if (::send(fd_, bytes.data(), bytes.size(), 0) < 0)
        throw TransportError("send to " + target_.str() + ": " + std::strerror(errno));
    return q;
}

std::vector<WireResponse> UdpTransport::poll(Timestamp until)
{
    return receive(until, false);
}

std::vector<WireResponse> UdpTransport::poll_some(Timestamp until)
{
    return receive(until, true);
}

std::vector<WireResponse> UdpTransport::receive(Timestamp until, bool stop_early)
{
    std::vector<WireResponse> out;
    std::uint8_t buf[4096];
    for (;;) {
        for (;;) {
            const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
            if (n < 0) {
                if (errno == EAGAIN || errno == EWOULDBLOCK)
                    break;
                if (errno == EINTR)
                    continue;
                // ICMP unreachable surfaces as ECONNREFUSED on a connected socket.
                if (errno == ECONNREFUSED)
                    break;
                throw TransportError("recv from " + target_.str() + ": " + std::strerror(errno));
            }
            try {
                out.push_back(decode_response({buf, static_cast<std::size_t>(n)}, TransportMeta{std::nullopt, now()}));
            } catch (const ParseError&) {
                ++malformed_;
            }
        }
        const Timestamp remaining = until - now();
        if (remaining <= Timestamp::zero() || (stop_early && !out.empty()))
            return out;
        pollfd pfd{fd_, POLLIN, 0};
        if (::poll(&pfd, 1, poll_timeout_ms(remaining)) < 0 && errno != EINTR)
            throw TransportError(std::string("poll: ") + std::strerror(errno));
    }
}

UdpInjectorServer::UdpInjectorServer(PathConfig config, const Endpoint& listen) : sim_(std::move(config))
{
    socklen_t len = 0;
    const auto addr = resolve(listen, len);
    fd_ = ::socket(addr.ss_family, SOCK_DGRAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0);
    if (fd_ < 0)
        throw TransportError(std::string("socket: ") + std::strerror(errno));
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), len) != 0) {
        const int err = errno;
        ::close(fd_);
        throw TransportError("bind " + listen.str() + ": " + std::strerror(err));
    }
    sockaddr_storage bound{};
    socklen_t blen = sizeof bound;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &blen);
    port_ = ntohs(bound.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port
                                              : reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
}

UdpInjectorServer::~UdpInjectorServer()
{
    if (fd_ >= 0)
        ::close(fd_);
}

void UdpInjectorServer::run()
{
    struct Outgoing {
        Timestamp due;
        std::uint64_t seq;
        std::vector<std::uint8_t> bytes;
        sockaddr_storage peer;
        socklen_t peer_len;
    };
    auto later = [](const Outgoing& a, const Outgoing& b) { return a.due != b.due ? a.due > b.due : a.seq > b.seq; };
    std::priority_queue<Outgoing, std::vector<Outgoing>, decltype(later)> queue(later);
    std::uint64_t seq = 0;
    std::uint8_t buf[4096];

    while (!stop_.load()) {
        const Timestamp now = steady_now();
        while (!queue.empty() && queue.top().due <= now) {
            const auto& o = queue.top();
            ::sendto(fd_, o.bytes.data(), o.bytes.size(), 0, reinterpret_cast<const sockaddr*>(&o.peer), o.peer_len);
            queue.pop();
        }
        const Timestamp wait = queue.empty() ? std::chrono::milliseconds(50) : queue.top().due - now;
        pollfd pfd{fd_, POLLIN, 0};
        if (::poll(&pfd, 1, std::min(poll_timeout_ms(wait), 50)) <= 0)
            continue;
        for (;;) {
            sockaddr_storage peer{};
            socklen_t peer_len = sizeof peer;
            const ssize_t n = ::recvfrom(fd_, buf, sizeof buf, 0, reinterpret_cast<sockaddr*>(&peer), &peer_len);
            if (n < 0)
                break;
            DnsQuery q;
            try {
                q = decode_query({buf, static_cast<std::size_t>(n)});
            } catch (const ParseError&) {
                continue;
            }
            ++queries_;
            q.sent_at = steady_now();
            for (const auto& r : sim_.on_query(q))
                queue.push({r.received_at, seq++, encode_response(r), peer, peer_len});
        }
    }
}

std::vector<ProbeRecord> run_path(std::span<const DnsQuery> traffic, const PathConfig& path, Date date)
{
    InjectorSim sim(path);
    std::vector<std::size_t> order(traffic.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return traffic[a].sent_at < traffic[b].sent_at; });
    std::vector<ProbeRecord> out(traffic.size());
    for (std::size_t i : order) {
        const auto& q = traffic[i];
        ProbeRecord& rec = out[i];
        rec.date = date;
        rec.path = path.name;
        rec.qname = q.qname;
        rec.qtype = q.qtype;
        rec.txid = q.txid;
        rec.sent_at = q.sent_at;
        for (auto& r : sim.on_query(q)) {
            auto parsed = decode_response(encode_response(r), TransportMeta{r.df_flag, r.received_at});
            parsed.ground_truth_forged = r.ground_truth_forged;
            rec.responses.push_back(std::move(parsed));
        }
        const bool forged = std::any_of(rec.responses.begin(), rec.responses.end(),
                                        [](const WireResponse& r) { return r.ground_truth_forged.value_or(true); });
        rec.verdict = forged ? ProbeVerdict::Censored : ProbeVerdict::NotCensored;
    }
    return out;
}

} // namespace gfwlab
