#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "iagc/checkpoint.hpp"
#include "iagc/dataset.hpp"
#include "iagc/loss.hpp"
#include "iagc/metrics.hpp"
#include "iagc/model.hpp"
#include "iagc/optim.hpp"

namespace iagc {

struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t steps_per_epoch = 500;  // 0 = ceil(dataset/batch)
    std::size_t batch = 2;
    std::size_t crop = 64;
    double lr = 4e-4;
    double weight_decay = 1e-7;
    double charb_eps = 1e-3;
    CharbonnierMode charb_mode = CharbonnierMode::WholeTensor;
    std::uint64_t seed = 7;
    std::size_t checkpoint_every = 0;
    std::size_t probe_index = 0;
    bool augment = false;

    std::size_t total_steps(std::size_t dataset_size) const {
        const std::size_t spe =
            steps_per_epoch ? steps_per_epoch : (dataset_size + batch - 1) / batch;
        return epochs * spe;
    }
};

struct TrainResult {
    double first_loss = 0.0;
    double final_loss = 0.0;
    std::size_t steps_run = 0;
    std::string checkpoint_path;
    std::string state_path;
    std::string log_path;
};

namespace detail {

// Optimizer/rng sidecar so a run can resume exactly: magic "IAGS", version,
// next step, adam t, per-parameter m/v (f32), then the two rng streams.
template <class T>
void save_train_state(const std::string& path, std::size_t next_step, const AdamState<T>& st,
                      const std::mt19937_64& data_rng, const std::mt19937_64& drop_rng) {
    std::string out;
    out += "IAGS";
    put_u32(out, 1);
    put_u32(out, std::uint32_t(next_step));
    put_u32(out, std::uint32_t(st.t));
    put_u32(out, std::uint32_t(st.slots.size()));
    for (const auto& slot : st.slots) {
        put_u32(out, std::uint32_t(slot.m.size()));
        for (T v : slot.m) put_f32(out, float(v));
        for (T v : slot.v) put_f32(out, float(v));
    }
    std::ostringstream rs;
    rs << data_rng << '\n' << drop_rng << '\n';
    const std::string rstr = rs.str();
    put_u32(out, std::uint32_t(rstr.size()));
    out += rstr;
    write_file_atomic(path, out);
}

template <class T>
std::size_t load_train_state(const std::string& path, AdamState<T>& st, std::mt19937_64& data_rng,
                             std::mt19937_64& drop_rng) {
    const std::string buf = read_file(path);
    Reader r{buf};
    if (r.bytes(4) != "IAGS") throw FormatError("bad train-state magic: " + path);
    if (r.u32() != 1) throw FormatError("unsupported train-state version");
    const std::size_t next_step = r.u32();
    st.t = r.u32();
    const std::uint32_t nslots = r.u32();
    st.slots.assign(nslots, {});
    for (auto& slot : st.slots) {
        const std::uint32_t n = r.u32();
        slot.m.resize(n);
        slot.v.resize(n);
        for (auto& v : slot.m) v = T(r.f32());
        for (auto& v : slot.v) v = T(r.f32());
    }
    const std::uint32_t rlen = r.u32();
    std::istringstream rs(r.bytes(rlen));
    rs >> data_rng >> drop_rng;
    if (rs.fail()) throw FormatError("bad rng state in " + path);
    return next_step;
}

template <class T>
ImagePair<T> crop_and_flip(const ImagePair<T>& pair, std::size_t crop, bool augment,
                           std::mt19937_64& rng) {
    const std::size_t H = pair.gt.dim(0), W = pair.gt.dim(1);
    const std::size_t ch = std::min(crop, H), cw = std::min(crop, W);
    std::size_t oy = 0, ox = 0;
    if (ch < H) oy = std::uniform_int_distribution<std::size_t>(0, H - ch)(rng);
    if (cw < W) ox = std::uniform_int_distribution<std::size_t>(0, W - cw)(rng);
    bool flip = false;
    if (augment) flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    if (oy == 0 && ox == 0 && ch == H && cw == W && !flip) return pair;

    auto take = [&](const BasicTensor<T>& img) {
        std::vector<T> out(ch * cw * 3);
        for (std::size_t i = 0; i < ch; ++i)
            for (std::size_t j = 0; j < cw; ++j) {
                const std::size_t sj = flip ? (cw - 1 - j) : j;
                const std::size_t src = ((oy + i) * W + (ox + sj)) * 3;
                const std::size_t dst = (i * cw + j) * 3;
                for (int k = 0; k < 3; ++k) out[dst + k] = img[src + k];
            }
        return BasicTensor<T>::from_data({ch, cw, 3}, std::move(out));
    };
    return ImagePair<T>{take(pair.low), take(pair.gt), pair.name};
}

inline std::string format_log_line(std::size_t step, double lr, double loss, double p1, double p2,
                                   double p3) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.6f,%.6f,%.6f", step, lr, loss, p1, p2, p3);
    return buf;
}

}  // namespace detail

// End-to-end optimization of all three stages. Writes a per-step CSV loss
// log (step,lr,loss,psnr_s1,psnr_s2,psnr_s3), a checkpoint, and a resumable
// optimizer state. Fully deterministic given (seed, config, dataset).
template <class T>
TrainResult train(IagcModel<T>& model, const std::vector<ImagePair<T>>& dataset,
                  const TrainConfig& cfg, const std::string& out_dir, bool resume = false) {
    namespace fs = std::filesystem;
    if (dataset.empty()) throw Error("train: dataset is empty");
    std::error_code ec;
    fs::create_directories(out_dir, ec);

    TrainResult result;
    result.checkpoint_path = (fs::path(out_dir) / "checkpoint.iagc").string();
    result.state_path = (fs::path(out_dir) / "train_state.bin").string();
    result.log_path = (fs::path(out_dir) / "loss_log.csv").string();

    const std::size_t total = cfg.total_steps(dataset.size());
    AdamState<T> adam;
    adam.init(model.params);
    AdamConfig adam_cfg;
    adam_cfg.weight_decay = cfg.weight_decay;

    std::mt19937_64 data_rng(cfg.seed);
    std::mt19937_64 drop_rng(cfg.seed ^ 0x5DEECE66Dull);
    std::size_t start_step = 0;

    if (resume) {
        load_checkpoint(model.params, result.checkpoint_path);
        start_step = detail::load_train_state(result.state_path, adam, data_rng, drop_rng);
    }

    std::ofstream log(result.log_path, resume ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open loss log: " + result.log_path);
    if (!resume) log << "step,lr,loss,psnr_s1,psnr_s2,psnr_s3\n";

    const ImagePair<T>& probe = dataset[cfg.probe_index % dataset.size()];
    std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);

    for (std::size_t step = start_step; step < total; ++step) {
        const double lr_t = lr_schedule(step, total, cfg.lr);
        model.params.zero_grad();

        double loss_value = 0.0;
        for (std::size_t bi = 0; bi < cfg.batch; ++bi) {
            const auto& pair = dataset[pick(data_rng)];
            const auto sample = detail::crop_and_flip(pair, cfg.crop, cfg.augment, data_rng);
            auto outputs = model.forward(sample.low, /*training=*/true, &drop_rng);
            auto loss = loss_total(outputs, sample.gt, T(cfg.charb_eps), cfg.charb_mode);
            backward(scale(loss, T(1.0 / double(cfg.batch))));
            loss_value += double(loss[0]) / double(cfg.batch);
        }

        if (!std::isfinite(loss_value)) {
            double grad_norm2 = 0.0;
            for (const auto& [name, p] : model.params) {
                (void)name;
                if (!p.has_grad()) continue;
                for (T g : p.grad()) grad_norm2 += double(g) * double(g);
            }
            std::ostringstream diag;
            diag << "non-finite loss at step " << (step + 1) << ": loss=" << loss_value
                 << " lr=" << lr_t << " grad_norm=" << std::sqrt(grad_norm2);
            throw TrainAbort(diag.str());
        }

        adam_step(model.params, adam, lr_t, adam_cfg);

        double p1, p2, p3;
        {
            NoGradGuard ng;
            auto probe_out = model.forward(probe.low, /*training=*/false);
            p1 = psnr(probe_out.r_s1, probe.gt);
            p2 = psnr(probe_out.r_s2, probe.gt);
            p3 = psnr(probe_out.r_s3, probe.gt);
        }
        log << detail::format_log_line(step + 1, lr_t, loss_value, p1, p2, p3) << "\n";

        if (step == 0) result.first_loss = loss_value;
        result.final_loss = loss_value;
        ++result.steps_run;

        if (cfg.checkpoint_every && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < total) {
            save_checkpoint(model.params, result.checkpoint_path);
            detail::save_train_state(result.state_path, step + 1, adam, data_rng, drop_rng);
        }
    }

    log.flush();
    save_checkpoint(model.params, result.checkpoint_path);
    detail::save_train_state(result.state_path, total, adam, data_rng, drop_rng);
    return result;
}

}  // namespace iagc
