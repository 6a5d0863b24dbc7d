#pragma once
//
// Record of every message exchanged in a simulated protocol run.
// Payloads hold the full values; redacted_view() restricts to what one
// party legitimately sees (messages it sent or received).
//

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace cape {

enum class Role { NoiseGenerator, Aggregator, Site };

struct Party {
    Role role = Role::Site;
    int index = -1; // site id; -1 for the two central parties

    static Party noise_generator() { return {Role::NoiseGenerator, -1}; }
    static Party aggregator() { return {Role::Aggregator, -1}; }
    static Party site(std::size_t s) { return {Role::Site, static_cast<int>(s)}; }

    std::string name() const
    {
        switch (role) {
        case Role::NoiseGenerator: return "noise-generator";
        case Role::Aggregator: return "aggregator";
        case Role::Site: return "site" + std::to_string(index);
        }
        return "?";
    }

    friend bool operator==(const Party&, const Party&) = default;
};

namespace msg {
inline constexpr const char* e_share = "e-share";
inline constexpr const char* f_share = "f-share";
inline constexpr const char* g_share = "g-share"; // local draw, recorded site -> itself
inline constexpr const char* site_output = "site-output";
inline constexpr const char* broadcast_w = "broadcast-W";
} // namespace msg

struct Message {
    int round = 0;
    Party sender;
    Party receiver;
    std::string kind;
    std::vector<Index> shape;
    std::vector<double> payload;

    std::size_t bytes() const { return payload.size() * sizeof(double); }
    bool is_local() const { return sender == receiver; }

    /// Payload viewed as a column-major matrix (shape must be 2-D).
    Matrix as_matrix() const
    {
        return Eigen::Map<const Matrix>(payload.data(), shape.at(0), shape.at(1));
    }
    double as_scalar() const { return payload.at(0); }
};

class ProtocolTranscript {
public:
    void record(int round, Party from, Party to, std::string kind, std::vector<Index> shape, std::vector<double> payload)
    {
        messages_.push_back({round, from, to, std::move(kind), std::move(shape), std::move(payload)});
    }
    void record_scalar(int round, Party from, Party to, std::string kind, double x)
    {
        record(round, from, to, std::move(kind), {}, {x});
    }
    void record_matrix(int round, Party from, Party to, std::string kind, const Matrix& m)
    {
        record(round, from, to, std::move(kind), {m.rows(), m.cols()},
               std::vector<double>(m.data(), m.data() + m.size()));
    }
    void record_tensor(int round, Party from, Party to, std::string kind, const Tensor3& t)
    {
        auto d = t.data();
        record(round, from, to, std::move(kind), {t.dim(0), t.dim(1), t.dim(2)}, std::vector<double>(d.begin(), d.end()));
    }

    void append(const ProtocolTranscript& other)
    {
        messages_.insert(messages_.end(), other.messages_.begin(), other.messages_.end());
    }

    const std::vector<Message>& messages() const { return messages_; }

    std::vector<Message> filter(std::string_view kind, int round = -1) const
    {
        std::vector<Message> out;
        for (const auto& m : messages_)
            if (m.kind == kind && (round < 0 || m.round == round)) out.push_back(m);
        return out;
    }

    /// Messages the given party sent or received.
    ProtocolTranscript redacted_view(const Party& who) const
    {
        ProtocolTranscript out;
        for (const auto& m : messages_)
            if (m.sender == who || m.receiver == who) out.messages_.push_back(m);
        return out;
    }

    /// Bytes sent over the network (local draws excluded) from `from`, optionally per round.
    std::size_t bytes_sent(Role from, int round = -1) const
    {
        std::size_t n = 0;
        for (const auto& m : messages_)
            if (!m.is_local() && m.sender.role == from && (round < 0 || m.round == round)) n += m.bytes();
        return n;
    }

private:
    std::vector<Message> messages_;
};

} // namespace cape
