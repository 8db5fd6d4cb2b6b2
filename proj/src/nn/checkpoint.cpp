#include "pcb/nn/checkpoint.hpp"

#include <fmt/format.h>

#include "pcb/binary_io.hpp"
#include "pcb/error.hpp"

namespace pcb::nn {

namespace {

std::uint32_t u32(std::size_t v) {
    if (v > UINT32_MAX) throw IoError("checkpoint field exceeds 32 bits");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> serialize_network(const Network& net) {
    const auto& c = net.config;
    ByteWriter w;
    w.magic("PCBN");
    w.put(kCheckpointVersion);
    for (const std::size_t v : {c.pair.conv1, c.pair.conv2, c.num_classes, c.geometry.channels, c.geometry.frames,
                                c.geometry.height, c.geometry.width, c.kernel, c.pool.t, c.pool.h, c.pool.w, c.hidden})
        w.put(u32(v));
    const auto params = net.parameters();
    w.put(u32(params.size()));
    for (const Tensor* t : params) {
        w.put(u32(t->rank()));
        for (const auto d : t->shape().dims()) w.put(u32(d));
        for (const float v : t->data()) w.put(v);
    }
    return w.take();
}

Network deserialize_network(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (!r.magic("PCBN")) throw IoError("not a checkpoint: bad magic");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw IoError(fmt::format("unsupported checkpoint version {}", version));
    NetworkConfig c;
    c.pair.conv1 = r.get<std::uint32_t>();
    c.pair.conv2 = r.get<std::uint32_t>();
    c.num_classes = r.get<std::uint32_t>();
    c.geometry.channels = r.get<std::uint32_t>();
    c.geometry.frames = r.get<std::uint32_t>();
    c.geometry.height = r.get<std::uint32_t>();
    c.geometry.width = r.get<std::uint32_t>();
    c.kernel = r.get<std::uint32_t>();
    c.pool.t = r.get<std::uint32_t>();
    c.pool.h = r.get<std::uint32_t>();
    c.pool.w = r.get<std::uint32_t>();
    c.hidden = r.get<std::uint32_t>();

    // A freshly initialized network fixes the expected shapes; values are overwritten below.
    RngStream unused(0);
    Network net = init_network(c, unused);
    auto params = net.parameters();
    const auto count = r.get<std::uint32_t>();
    if (count != params.size()) throw IoError(fmt::format("checkpoint holds {} tensors, expected {}", count, params.size()));
    for (Tensor* t : params) {
        const auto rank = r.get<std::uint32_t>();
        if (rank != t->rank()) throw IoError("checkpoint tensor rank does not match architecture");
        for (std::size_t a = 0; a < rank; ++a)
            if (r.get<std::uint32_t>() != t->dim(a)) throw IoError("checkpoint tensor shape does not match architecture");
        for (auto& v : t->data()) v = r.get<float>();
    }
    if (r.remaining() != 0) throw IoError("trailing bytes after checkpoint tensors");
    return net;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_network(net));
}

Network load_checkpoint(const std::filesystem::path& path) { return deserialize_network(read_file_bytes(path)); }

}  // namespace pcb::nn
