#include "dbdmp/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <unordered_map>

namespace dbdmp {

static constexpr char kMagic[8] = {'D', 'B', 'D', 'M', 'P', 'C', 'K', '1'};

template <typename T>
static void put(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
static void get(std::ifstream& f, T& v) {
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
}
static void put_str(std::ofstream& f, const std::string& s) {
    put<uint64_t>(f, s.size());
    f.write(s.data(), std::streamsize(s.size()));
}
static std::string get_str(std::ifstream& f) {
    uint64_t n = 0;
    get(f, n);
    std::string s(n, '\0');
    f.read(s.data(), std::streamsize(n));
    return s;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path.string());
    f.write(kMagic, 8);
    put_str(f, ck.config.to_json());
    put<int32_t>(f, ck.stage == Stage::Pretrain ? 0 : 1);
    put<int32_t>(f, ck.epoch);
    put_str(f, ck.rng_state);
    put<uint64_t>(f, ck.names.size());
    for (size_t i = 0; i < ck.names.size(); ++i) {
        put_str(f, ck.names[i]);
        put<uint64_t>(f, ck.shapes[i].size());
        for (int64_t d : ck.shapes[i]) put<int64_t>(f, d);
        put<uint64_t>(f, ck.values[i].size());
        f.write(reinterpret_cast<const char*>(ck.values[i].data()),
                std::streamsize(ck.values[i].size() * sizeof(float)));
        f.write(reinterpret_cast<const char*>(ck.momenta[i].data()),
                std::streamsize(ck.momenta[i].size() * sizeof(float)));
    }
    if (!f) throw std::runtime_error("checkpoint write failed: " + path.string());

    nlohmann::json side{{"stage", ck.stage == Stage::Pretrain ? "pretrain" : "segment"},
                        {"epoch", ck.epoch},
                        {"parameters", ck.names.size()},
                        {"config_hash", ck.config.hash()},
                        {"config", nlohmann::json::parse(ck.config.to_json())}};
    std::ofstream sf(path.string() + ".json");
    sf << side.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("corrupt checkpoint (bad magic): " + path.string());
    Checkpoint ck;
    ck.config = ExperimentConfig::from_json(get_str(f));
    int32_t stage = 0;
    get(f, stage);
    ck.stage = stage == 0 ? Stage::Pretrain : Stage::Segment;
    int32_t epoch = 0;
    get(f, epoch);
    ck.epoch = epoch;
    ck.rng_state = get_str(f);
    uint64_t count = 0;
    get(f, count);
    for (uint64_t i = 0; i < count; ++i) {
        ck.names.push_back(get_str(f));
        uint64_t nd = 0;
        get(f, nd);
        std::vector<int64_t> shape(nd);
        for (auto& d : shape) get(f, d);
        ck.shapes.push_back(std::move(shape));
        uint64_t n = 0;
        get(f, n);
        std::vector<float> vals(n), mom(n);
        f.read(reinterpret_cast<char*>(vals.data()), std::streamsize(n * sizeof(float)));
        f.read(reinterpret_cast<char*>(mom.data()), std::streamsize(n * sizeof(float)));
        ck.values.push_back(std::move(vals));
        ck.momenta.push_back(std::move(mom));
    }
    if (!f) throw std::runtime_error("corrupt checkpoint (truncated): " + path.string());
    return ck;
}

Checkpoint snapshot(NetF& net, const ExperimentConfig& cfg, int epoch,
                    const std::string& rng_state) {
    Checkpoint ck;
    ck.config = cfg;
    ck.stage = cfg.train.stage;
    ck.epoch = epoch;
    ck.rng_state = rng_state;
    for (auto* p : net.params()) {
        ck.names.push_back(p->name);
        ck.shapes.push_back(p->value.shape);
        ck.values.push_back(p->value.data);
        ck.momenta.push_back(p->momentum.data);
    }
    return ck;
}

void restore_into(NetF& net, const Checkpoint& ck, bool restore_optimizer) {
    std::string diff;
    if (!net.cfg.trunk_compatible(ck.config.network, &diff))
        throw std::runtime_error("checkpoint network config mismatch on: " + diff);
    std::unordered_map<std::string, size_t> index;
    for (size_t i = 0; i < ck.names.size(); ++i) index[ck.names[i]] = i;
    for (auto* p : net.params()) {
        auto it = index.find(p->name);
        if (it == index.end())
            throw std::runtime_error("checkpoint missing parameter: " + p->name);
        const auto& vals = ck.values[it->second];
        if (vals.size() != p->value.data.size())
            throw std::runtime_error("checkpoint shape mismatch for: " + p->name);
        p->value.data = vals;
        if (restore_optimizer) p->momentum.data = ck.momenta[it->second];
    }
}

void load_trunk(NetF& net, const Checkpoint& ck) {
    std::string diff;
    if (!net.cfg.trunk_compatible(ck.config.network, &diff))
        throw std::runtime_error("init checkpoint network config mismatch on: " + diff);
    std::unordered_map<std::string, size_t> index;
    for (size_t i = 0; i < ck.names.size(); ++i) index[ck.names[i]] = i;
    for (auto* p : net.trunk_params()) {
        auto it = index.find(p->name);
        if (it == index.end())
            throw std::runtime_error("init checkpoint missing parameter: " + p->name);
        if (ck.values[it->second].size() != p->value.data.size())
            throw std::runtime_error("init checkpoint shape mismatch for: " + p->name);
        p->value.data = ck.values[it->second];
    }
}

}  // namespace dbdmp
