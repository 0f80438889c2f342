#pragma once

#include "gfwlab/injector.hpp"
#include "gfwlab/records.hpp"
#include "gfwlab/wire.hpp"

#include <atomic>
#include <map>
#include <memory>
#include <queue>
#include <span>
#include <string>
#include <vector>

namespace gfwlab {

class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Datagram transport with its own clock. Sending and receiving are
/// decoupled: send() fires a query, poll() advances to `until` and returns
/// whatever arrived meanwhile, in arrival order.
class Transport {
public:
    virtual ~Transport() = default;

    virtual std::string name() const = 0;
    virtual Timestamp now() const = 0;
    /// Stamps q.sent_at with now() and returns the stamped query.
    virtual DnsQuery send(DnsQuery q) = 0;
    virtual std::vector<WireResponse> poll(Timestamp until) = 0;
    /// Like poll() but may return early, as soon as anything has arrived.
    virtual std::vector<WireResponse> poll_some(Timestamp until) { return poll(until); }
    /// Whether df_flag is populated on received responses.
    virtual bool exposes_df() const noexcept = 0;
};

/// In-process message bus over an InjectorSim with a virtual clock. Every
/// response is serialized and re-parsed so the wire codec is on the path.
class SimTransport final : public Transport {
public:
    explicit SimTransport(PathConfig config);

    std::string name() const override { return sim_.config().name; }
    Timestamp now() const override { return now_; }
    DnsQuery send(DnsQuery q) override;
    std::vector<WireResponse> poll(Timestamp until) override;
    std::vector<WireResponse> poll_some(Timestamp until) override;
    bool exposes_df() const noexcept override { return true; }

    InjectorSim& simulator() noexcept { return sim_; }
    std::size_t in_flight() const noexcept { return pending_.size(); }

private:
    struct Pending {
        Timestamp at;
        std::uint64_t seq;
        WireResponse response;
    };
    struct Later {
        bool operator()(const Pending& a, const Pending& b) const
        {
            return a.at != b.at ? a.at > b.at : a.seq > b.seq;
        }
    };

    InjectorSim sim_;
    Timestamp now_{0};
    std::uint64_t seq_ = 0;
    std::priority_queue<Pending, std::vector<Pending>, Later> pending_;
};

/// Answers from a fixed table after a fixed delay, like a caching resolver;
/// names not in the table get NXDOMAIN. With `silent`, nothing is answered.
class StaticResponder final : public Transport {
public:
    struct Options {
        std::string name = "resolver";
        double delay_ms = 20.0;
        bool silent = false;
        bool authoritative = false;
    };

    StaticResponder(std::map<std::string, std::vector<DnsAnswer>> records, Options options);

    std::string name() const override { return options_.name; }
    Timestamp now() const override { return now_; }
    DnsQuery send(DnsQuery q) override;
    std::vector<WireResponse> poll(Timestamp until) override;
    bool exposes_df() const noexcept override { return false; }

private:
    std::map<std::string, std::vector<DnsAnswer>> records_;
    Options options_;
    Timestamp now_{0};
    std::vector<WireResponse> pending_;
};

struct Endpoint {
    std::string host;
    std::uint16_t port = 53;

    /// "host:port" or "[v6]:port"; port defaults to 53.
    static Endpoint parse(std::string_view text);
    std::string str() const;
};

/// A single non-blocking UDP socket connected to `target`. df_flag is not
/// available at this layer, so responses carry it as absent.
class UdpTransport final : public Transport {
public:
    explicit UdpTransport(const Endpoint& target);
    ~UdpTransport() override;
    UdpTransport(const UdpTransport&) = delete;
    UdpTransport& operator=(const UdpTransport&) = delete;

    std::string name() const override { return target_.str(); }
    Timestamp now() const override;
    DnsQuery send(DnsQuery q) override;
    std::vector<WireResponse> poll(Timestamp until) override;
    std::vector<WireResponse> poll_some(Timestamp until) override;
    bool exposes_df() const noexcept override { return false; }

    std::size_t malformed() const noexcept { return malformed_; }

private:
    std::vector<WireResponse> receive(Timestamp until, bool stop_early);

    Endpoint target_;
    int fd_ = -1;
    std::size_t malformed_ = 0;
};

/// The simulator behind a real UDP socket: answers every query arriving on
/// `listen` with the responses the InjectorSim schedules, each sent at its
/// scheduled delay.
class UdpInjectorServer {
public:
    UdpInjectorServer(PathConfig config, const Endpoint& listen);
    ~UdpInjectorServer();
    UdpInjectorServer(const UdpInjectorServer&) = delete;
    UdpInjectorServer& operator=(const UdpInjectorServer&) = delete;

    /// Bound port (useful when listening on port 0).
    std::uint16_t port() const noexcept { return port_; }
    /// Serves until stop() is called from another thread.
    void run();
    void stop() noexcept { stop_.store(true); }
    std::size_t queries_seen() const noexcept { return queries_.load(); }

private:
    InjectorSim sim_;
    int fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stop_{false};
    std::atomic<std::size_t> queries_{0};
};

/// Replays `traffic` (each query stamped with its own sent_at) through the
/// simulator and returns one record per query, in send order, with every
/// response delivered in timestamp order.
std::vector<ProbeRecord> run_path(std::span<const DnsQuery> traffic, const PathConfig& path, Date date = {});

} // namespace gfwlab
