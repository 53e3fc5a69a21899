#pragma once

// Score prior served by another process over the denoiser wire protocol.
//
// Endpoints:
//   exec:<shell command>   spawn a child and talk over its stdin/stdout
//   unix:<path>            connect to a Unix-domain stream socket
//   tcp:<host>:<port>      connect to a TCP socket (IPv4 numeric or name)
//
// One request is in flight per connection; ExternalPrior keeps a pool of
// `max_concurrent` connections, all opened (and handshaken) at construction
// so an unreachable endpoint fails before sampling starts.

#include <cerrno>
#include <condition_variable>
#include <csignal>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include "diffsci/denoiser_prior.hpp"
#include "diffsci/diffusion_schedule.hpp"
#include "diffsci/error.hpp"
#include "diffsci/wire_protocol.hpp"

namespace diffsci {

namespace detail {

[[noreturn]] inline void ext_fail(const std::string& what) { fail(ErrorKind::ExternalPrior, what); }

class FileDescriptor {
public:
    FileDescriptor() = default;
    explicit FileDescriptor(int fd) : fd_(fd) {}
    FileDescriptor(FileDescriptor&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    FileDescriptor& operator=(FileDescriptor&& o) noexcept
    {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    FileDescriptor(const FileDescriptor&) = delete;
    FileDescriptor& operator=(const FileDescriptor&) = delete;
    ~FileDescriptor() { reset(); }

    int get() const { return fd_; }
    void reset()
    {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

} // namespace detail

/// A bidirectional byte stream to one score server.
class Connection {
public:
    Connection(detail::FileDescriptor in, detail::FileDescriptor out, pid_t child, int timeout_ms)
        : in_(std::move(in)), out_(std::move(out)), child_(child), timeout_ms_(timeout_ms)
    {
    }
    Connection(const Connection&) = delete;
    Connection& operator=(const Connection&) = delete;

    ~Connection()
    {
        out_.reset();  // EOF tells a stdio server to exit
        in_.reset();
        if (child_ > 0) {
            int status = 0;
            ::waitpid(child_, &status, 0);
        }
    }

    void write_all(std::span<const std::uint8_t> bytes)
    {
        std::size_t done = 0;
        while (done < bytes.size()) {
            ssize_t n = is_socket_ ? ::send(out_.get(), bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL)
                                   : ::write(out_.get(), bytes.data() + done, bytes.size() - done);
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) detail::ext_fail("write to score server failed: " + std::string(std::strerror(errno)));
            done += static_cast<std::size_t>(n);
        }
    }

    void read_exact(std::span<std::uint8_t> buf)
    {
        std::size_t done = 0;
        while (done < buf.size()) {
            pollfd p{in_.get(), POLLIN, 0};
            int r = ::poll(&p, 1, timeout_ms_);
            if (r < 0 && errno == EINTR) continue;
            if (r == 0) detail::ext_fail("score server timed out after " + std::to_string(timeout_ms_) + " ms");
            if (r < 0) detail::ext_fail("poll on score server failed: " + std::string(std::strerror(errno)));
            ssize_t n = ::read(in_.get(), buf.data() + done, buf.size() - done);
            if (n < 0 && errno == EINTR) continue;
            if (n == 0) detail::ext_fail("score server closed the connection");
            if (n < 0) detail::ext_fail("read from score server failed: " + std::string(std::strerror(errno)));
            done += static_cast<std::size_t>(n);
        }
    }

    wire::Frame read_frame()
    {
        wire::Reader r([this](std::span<std::uint8_t> b) { read_exact(b); });
        return wire::read_frame(r);
    }

    void mark_socket() { is_socket_ = true; }

private:
    detail::FileDescriptor in_, out_;
    pid_t child_ = -1;
    int timeout_ms_;
    bool is_socket_ = false;
};

namespace detail {

inline std::unique_ptr<Connection> spawn_child(const std::string& command, int timeout_ms)
{
    // A dead child must surface as EPIPE on write, not kill the client.
    static const bool sigpipe_ignored = [] {
        std::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)sigpipe_ignored;

    int to_child[2], from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) ext_fail("pipe() failed");
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
        ::close(to_child[0]);
        ::close(to_child[1]);
        ext_fail("pipe() failed");
    }
    pid_t pid = ::fork();
    if (pid < 0) ext_fail("fork() failed");
    if (pid == 0) {
        ::dup2(to_child[0], STDIN_FILENO);
        ::dup2(from_child[1], STDOUT_FILENO);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    return std::make_unique<Connection>(FileDescriptor(from_child[0]), FileDescriptor(to_child[1]), pid, timeout_ms);
}

inline std::unique_ptr<Connection> connect_unix(const std::string& path, int timeout_ms)
{
    FileDescriptor fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (fd.get() < 0) ext_fail("socket() failed");
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (path.size() >= sizeof(addr.sun_path)) ext_fail("unix socket path too long: " + path);
    std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
    if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        ext_fail("cannot connect to unix:" + path + ": " + std::strerror(errno));
    const int dup = ::fcntl(fd.get(), F_DUPFD_CLOEXEC, 0);
    auto c = std::make_unique<Connection>(std::move(fd), FileDescriptor(dup), -1, timeout_ms);
    c->mark_socket();
    return c;
}

inline std::unique_ptr<Connection> connect_tcp(const std::string& hostport, int timeout_ms)
{
    const auto colon = hostport.rfind(':');
    if (colon == std::string::npos) ext_fail("tcp endpoint needs host:port, got '" + hostport + "'");
    const std::string host = hostport.substr(0, colon), port = hostport.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr)
        ext_fail("cannot resolve tcp:" + hostport);
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
    for (addrinfo* a = res; a != nullptr; a = a->ai_next) {
        FileDescriptor fd(::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol));
        if (fd.get() < 0) continue;
        if (::connect(fd.get(), a->ai_addr, a->ai_addrlen) != 0) continue;
        const int dup = ::fcntl(fd.get(), F_DUPFD_CLOEXEC, 0);
        auto c = std::make_unique<Connection>(std::move(fd), FileDescriptor(dup), -1, timeout_ms);
        c->mark_socket();
        return c;
    }
    ext_fail("cannot connect to tcp:" + hostport + ": " + std::strerror(errno));
}

} // namespace detail

inline std::unique_ptr<Connection> open_connection(const std::string& endpoint, int timeout_ms = 60000)
{
    if (endpoint.rfind("exec:", 0) == 0) return detail::spawn_child(endpoint.substr(5), timeout_ms);
    if (endpoint.rfind("unix:", 0) == 0) return detail::connect_unix(endpoint.substr(5), timeout_ms);
    if (endpoint.rfind("tcp:", 0) == 0) return detail::connect_tcp(endpoint.substr(4), timeout_ms);
    detail::ext_fail("unrecognised prior endpoint '" + endpoint + "' (expected exec:, unix: or tcp:)");
}

class ExternalPrior final : public ScorePrior {
public:
    ExternalPrior(std::string endpoint, const DiffusionSchedule& sched, std::size_t max_concurrent = 1,
                  int timeout_ms = 60000)
        : endpoint_(std::move(endpoint))
    {
        require(max_concurrent >= 1, "external prior needs at least one connection");
        const wire::Bytes hello =
            wire::encode(wire::Handshake{static_cast<std::uint32_t>(sched.steps()), sched.beta_start(),
                                         sched.beta_end()});
        for (std::size_t i = 0; i < max_concurrent; ++i) {
            auto c = open_connection(endpoint_, timeout_ms);
            c->write_all(hello);
            wire::Frame reply = c->read_frame();
            if (auto* e = std::get_if<wire::ErrorFrame>(&reply))
                detail::ext_fail("score server " + endpoint_ + " rejected handshake: " + e->message);
            if (!std::holds_alternative<wire::Ack>(reply))
                detail::ext_fail("score server " + endpoint_ + " answered handshake with an unexpected frame");
            idle_.push_back(std::move(c));
        }
        capacity_ = max_concurrent;
    }

    std::size_t max_concurrency() const override { return capacity_; }
    std::string name() const override { return "external(" + endpoint_ + ")"; }

    TriImage score(const PriorRequest& req) const override
    {
        Lease lease(*this);
        const std::string ctx = " at t=" + std::to_string(req.timestep);
        const auto frame = wire::tensor_frame(req.x(), req.timestep, false);
        wire::Frame reply;
        try {
            lease.conn->write_all(wire::encode(frame));
            reply = lease.conn->read_frame();
        } catch (const Error& e) {
            lease.broken = true;
            detail::ext_fail(std::string(e.what()) + ctx);
        }
        if (auto* e = std::get_if<wire::ErrorFrame>(&reply))
            detail::ext_fail("score server error" + ctx + ": " + e->message);
        auto* t = std::get_if<wire::TensorFrame>(&reply);
        if (t == nullptr || !t->is_response || t->timestep != frame.timestep || t->height != frame.height ||
            t->width != frame.width || t->channels != 3) {
            lease.broken = true;
            detail::ext_fail("score server response does not match the request" + ctx);
        }
        return wire::to_tri_image(*t);
    }

private:
    struct Lease {
        const ExternalPrior& owner;
        std::unique_ptr<Connection> conn;
        bool broken = false;

        explicit Lease(const ExternalPrior& o) : owner(o)
        {
            std::unique_lock lock(owner.mutex_);
            owner.cv_.wait(lock, [&] { return !owner.idle_.empty() || owner.lost_ == owner.capacity_; });
            if (owner.idle_.empty()) detail::ext_fail("all connections to " + owner.endpoint_ + " are broken");
            conn = std::move(owner.idle_.back());
            owner.idle_.pop_back();
        }
        ~Lease()
        {
            {
                std::lock_guard lock(owner.mutex_);
                if (broken)
                    ++owner.lost_;  // a half-read stream cannot be reused
                else
                    owner.idle_.push_back(std::move(conn));
            }
            owner.cv_.notify_one();
        }
    };

    std::string endpoint_;
    std::size_t capacity_ = 0;
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    mutable std::vector<std::unique_ptr<Connection>> idle_;
    mutable std::size_t lost_ = 0;
};

} // namespace diffsci
