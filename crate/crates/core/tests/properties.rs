use flopscale_core::arch::{count_params, state_size_elements, ArchConfig, ArchKind, SeqMixKind};
use flopscale_core::fit::{fit_isoflop_profile, fit_power_law, pareto_frontier, LossSurfaceFit, PowerLawFit, RunRecord};
use flopscale_core::flops::{
    flops_attention_gen_seq, flops_attention_gen_step, flops_attention_prefill, flops_linear, flops_mlstm_chunkwise,
    flops_mlstm_recurrent, flops_model_forward, training_compute, CostFactors, Workload,
};
use flopscale_core::memops::{bytes_linear, bytes_mlstm_chunkwise, bytes_model, ByteWidths};
use flopscale_core::planner::{compare_at_budget, compute_optimal_alloc, plan_token_param_grid, ConfigTable};
use flopscale_core::runtime::{builtin_accelerators, classify_regime, runtime_bounds, Regime};
use proptest::prelude::*;

fn cases() -> ProptestConfig {
    ProptestConfig::with_cases(256)
}

fn xlstm_config() -> impl Strategy<Value = ArchConfig> {
    (1u64..2048, 1u64..4096, 1u64..256, 1u64..512, 1u64..16, 1u64..48, prop::sample::select(vec![16u64, 32, 64, 128]))
        .prop_map(|(d, ff, qk, hv, h, l, c)| ArchConfig::xlstm(d, ff, qk, hv, h, l).with_chunk_size(c))
}

fn transformer_config() -> impl Strategy<Value = ArchConfig> {
    (1u64..2048, 1u64..4096, 1u64..256, 1u64..8, 1u64..6, 1u64..48).prop_map(|(d, ff, head, kv, group, l)| {
        ArchConfig::transformer(d, ff, head, kv * group, l).with_kv_heads(kv)
    })
}

fn any_config() -> impl Strategy<Value = ArchConfig> {
    prop_oneof![xlstm_config(), transformer_config()]
}

fn any_workload() -> impl Strategy<Value = Workload> {
    (1u64..8, 0u64..4096, 1u64..256, 0u8..5).prop_map(|(b, t, g, mode)| match mode {
        0 => Workload::forward(b, t),
        1 => Workload::train(b, t),
        2 => Workload::prefill(b, t),
        3 => Workload::gen_step(b, t, g),
        _ => Workload::gen_seq(b, t, g),
    })
}

fn with_batch(w: &Workload, batch: u64) -> Workload {
    Workload { batch, ..*w }
}

proptest! {
    #![proptest_config(cases())]

    #[test]
    fn forward_flops_linear_in_batch(cfg in any_config(), w in any_workload()) {
        let f = CostFactors::default();
        let one = flops_model_forward(&cfg, &with_batch(&w, 1), &f).unwrap().total;
        let two = flops_model_forward(&cfg, &with_batch(&w, 2), &f).unwrap().total;
        prop_assert!(one >= 0.0);
        prop_assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn zero_batch_is_rejected(cfg in any_config(), w in any_workload()) {
        prop_assert!(flops_model_forward(&cfg, &with_batch(&w, 0), &CostFactors::default()).is_err());
        prop_assert!(bytes_model(&cfg, &with_batch(&w, 0), &ByteWidths::default()).is_err());
    }

    #[test]
    fn forward_flops_monotone_in_dimensions(cfg in any_config(), w in any_workload(), which in 0usize..6, bump in 1u64..64) {
        let f = CostFactors::default();
        let mut bigger = cfg.clone();
        match which {
            0 => bigger.d_model += bump,
            1 => bigger.d_ff += bump,
            2 => bigger.d_qk += bump,
            3 => bigger.d_hv += bump,
            4 => bigger.n_layer += bump,
            _ => bigger.n_vocab += bump,
        }
        let a = flops_model_forward(&cfg, &w, &f).unwrap().total;
        let b = flops_model_forward(&bigger, &w, &f).unwrap().total;
        prop_assert!(b >= a);
        let a = bytes_model(&cfg, &w, &ByteWidths::default()).unwrap().total_bytes();
        let b = bytes_model(&bigger, &w, &ByteWidths::default()).unwrap().total_bytes();
        prop_assert!(b >= a);
    }

    #[test]
    fn forward_flops_monotone_in_length(cfg in any_config(), b in 1u64..4, t in 0u64..4096, dt in 1u64..512) {
        let f = CostFactors::default();
        let at = |t| flops_model_forward(&cfg, &Workload::forward(b, t), &f).unwrap().total;
        prop_assert!(at(t + dt) >= at(t));
    }

    #[test]
    fn chunkwise_exactly_linear_in_t(cfg in xlstm_config(), k in 1u64..64) {
        let f = CostFactors::default();
        let l = cfg.chunk_size;
        let one = flops_mlstm_chunkwise(&cfg, l, &f).unwrap();
        prop_assert_eq!(flops_mlstm_chunkwise(&cfg, k * l, &f).unwrap(), k as f64 * one);
        prop_assert_eq!(flops_mlstm_chunkwise(&cfg, 2 * k * l, &f).unwrap(), 2.0 * flops_mlstm_chunkwise(&cfg, k * l, &f).unwrap());
        let w = ByteWidths::default();
        let b1 = bytes_mlstm_chunkwise(&cfg, k * l, &w).unwrap().total();
        prop_assert_eq!(bytes_mlstm_chunkwise(&cfg, 2 * k * l, &w).unwrap().total(), 2.0 * b1);
    }

    #[test]
    fn attention_prefill_exactly_quadratic(cfg in transformer_config(), t in 0u64..100_000) {
        let f = CostFactors::default();
        let one = flops_attention_prefill(&cfg, t, &f);
        prop_assert_eq!(flops_attention_prefill(&cfg, 2 * t, &f), 4.0 * one);
        let (tq, hq, qk, hv) = (t as f64, cfg.n_head_q as f64, cfg.d_qk as f64, cfg.d_hv as f64);
        prop_assert_eq!(one, 2.0 * 0.5 * tq * tq * hq * (qk + hv + 2.5));
    }

    #[test]
    fn gen_seq_closed_form_matches_sum(cfg in transformer_config(), tp in 0u64..64, tg in 1u64..64) {
        let f = CostFactors::default();
        let sum: f64 = (1..=tg).map(|t| flops_attention_gen_step(&cfg, tp, t, &f)).sum();
        let closed = flops_attention_gen_seq(&cfg, tp, tg, &f);
        prop_assert!((closed - sum).abs() <= 1e-12 * closed.abs());
    }

    #[test]
    fn recurrent_scales_with_heads(cfg in xlstm_config(), k in 1u64..8) {
        let f = CostFactors::default();
        let mut more = cfg.clone();
        more.n_head_q *= k;
        prop_assert_eq!(flops_mlstm_recurrent(&more, &f), k as f64 * flops_mlstm_recurrent(&cfg, &f));
    }

    #[test]
    fn zero_widths_give_zero_bytes(cfg in any_config(), w in any_workload()) {
        prop_assert_eq!(bytes_model(&cfg, &w, &ByteWidths::uniform(0.0)).unwrap().total_bytes(), 0.0);
    }

    #[test]
    fn weights_independent_of_tokens(cfg in any_config(), b in 1u64..8, t in 0u64..4096) {
        let w = ByteWidths::default();
        let a = bytes_model(&cfg, &Workload::forward(1, 1), &w).unwrap();
        let x = bytes_model(&cfg, &Workload::forward(b, t), &w).unwrap();
        prop_assert_eq!(a.total.weights, x.total.weights);
    }

    #[test]
    fn step_bytes_in_prompt_length(cfg in any_config(), tp in 0u64..10_000, dt in 1u64..1000) {
        let w = ByteWidths::default();
        let at = |tp| bytes_model(&cfg, &Workload::gen_step(1, tp, 1), &w).unwrap().total_bytes();
        match cfg.kind {
            ArchKind::Xlstm => prop_assert_eq!(at(tp + dt), at(tp)),
            ArchKind::Transformer => {
                let slope = (cfg.d_qk + cfg.d_hv) as f64 * cfg.kv_heads() as f64 * cfg.n_layer as f64 * 2.0;
                let diff = at(tp + dt) - at(tp);
                prop_assert!((diff - dt as f64 * slope).abs() <= 1e-9 * diff);
            }
        }
    }

    #[test]
    fn linear_layer_intensity_grows_with_batch(d in 1u64..8192, b in 1u64..4096) {
        let d = d as f64;
        let intensity = |b: f64| flops_linear(b, d, d) / bytes_linear(b, d, d, 2.0, 2.0);
        prop_assert!(intensity(2.0 * b as f64) > intensity(b as f64));
        // FLOPs / bytes = b d / (2 b + d): exactly linear in b up to saturation.
        let expected = b as f64 * d / (2.0 * b as f64 + d);
        prop_assert!((intensity(b as f64) - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn param_count_monotone(cfg in any_config(), bump in 1u64..64) {
        let mut bigger = cfg.clone();
        bigger.d_model += bump;
        prop_assert!(count_params(&bigger).unwrap().total > count_params(&cfg).unwrap().total);
        let p = count_params(&cfg).unwrap();
        prop_assert_eq!(p.total, p.embeddings + p.n_layer * (p.seq_mix_per_layer + p.feedforward_per_layer) + p.output_norm + p.unembedding);
    }

    #[test]
    fn kv_cache_linear_mlstm_state_constant(cfg in any_config(), t in 0u64..100_000) {
        let at = |k, t| state_size_elements(k, &cfg, t).unwrap();
        prop_assert_eq!(at(SeqMixKind::Mha, 2 * t), 2.0 * at(SeqMixKind::Mha, t));
        prop_assert!(at(SeqMixKind::Gqa, t) <= at(SeqMixKind::Mha, t));
        prop_assert_eq!(at(SeqMixKind::Mlstm, t), at(SeqMixKind::Mlstm, t + 1));
    }

    #[test]
    fn training_compute_linear_in_tokens(cfg in any_config(), t in 1u64..4096, m in 1u32..1000) {
        let f = CostFactors::default();
        let d = t as f64 * m as f64;
        let one = training_compute(&cfg, t, d, &f, 3.0).unwrap();
        let two = training_compute(&cfg, t, 2.0 * d, &f, 3.0).unwrap();
        prop_assert!((two.flops / one.flops - 2.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_exact_on_exact_points(coef in -5.0f64..5.0, expo in -2.0f64..2.0, xs in prop::collection::btree_set(1u32..100_000, 2..20)) {
        let xs: Vec<f64> = xs.into_iter().map(|x| x as f64 * 1e3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 10f64.powf(coef) * x.powf(expo)).collect();
        let fit = fit_power_law(&xs, &ys).unwrap();
        prop_assert!(fit.max_log_residual < 1e-9);
        prop_assert!((fit.exponent - expo).abs() < 1e-9);
    }

    #[test]
    fn parabola_optimum_moves_with_units(center in 7.0f64..11.0, curv in 0.05f64..2.0, ln_k in -5.0f64..5.0) {
        let pts: Vec<(f64, f64)> = (0..7).map(|i| {
            let u = center - 1.5 + 0.5 * i as f64;
            (10f64.powf(u), curv * (u - center).powi(2) + 2.0)
        }).collect();
        let k = 10f64.powf(ln_k);
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x * k, y)).collect();
        let a = fit_isoflop_profile(&pts).unwrap().optimum_x.unwrap();
        let b = fit_isoflop_profile(&scaled).unwrap().optimum_x.unwrap();
        prop_assert!((b / (a * k) - 1.0).abs() < 1e-9);
        prop_assert!((a / 10f64.powf(center) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pareto_matches_brute_force(points in prop::collection::vec((0u32..50, 0u32..50), 0..1000)) {
        let runs: Vec<RunRecord> = points.iter().map(|&(c, l)| RunRecord {
            kind: ArchKind::Xlstm, n: 1.0, d: 1.0, t_ctx: 1, c: 1.0 + c as f64, loss: 1.0 + l as f64,
        }).collect();
        let front = pareto_frontier(&runs);
        let dominated = |r: &RunRecord| runs.iter().any(|o| o.c <= r.c && o.loss <= r.loss && (o.c < r.c || o.loss < r.loss));
        let mut brute: Vec<RunRecord> = runs.iter().filter(|r| !dominated(r)).copied().collect();
        brute.sort_by(|a, b| a.c.total_cmp(&b.c).then(a.loss.total_cmp(&b.loss)));
        prop_assert_eq!(&front, &brute);
        prop_assert_eq!(pareto_frontier(&front), front);
    }

    #[test]
    fn bounds_ordering(a in 0.0f64..1e3, b in 0.0f64..1e3) {
        let (lo, hi) = runtime_bounds(a, b);
        prop_assert!(lo <= hi);
        prop_assert_eq!(lo == hi, a == 0.0 || b == 0.0);
    }

    #[test]
    fn regime_consistent_with_times(flops in 1.0f64..1e18, bytes in 1.0f64..1e15, which in 0usize..4) {
        let accel = &builtin_accelerators()[which];
        let regime = classify_regime(flops / bytes, accel);
        let (tf, tm) = (flops / accel.alpha_acc, bytes / accel.beta_acc);
        match regime {
            Regime::ComputeBound => prop_assert!(tf >= tm * (1.0 - 1e-12)),
            Regime::MemoryBound => prop_assert!(tf <= tm * (1.0 + 1e-12)),
        }
    }

    #[test]
    fn plan_ratio_and_antisymmetry(a in 0.01f64..10.0, ea in 0.2f64..0.8, b in 0.01f64..10.0, eb in 0.2f64..0.8, h in 15.0f64..25.0) {
        let law = |c, e| PowerLawFit { coefficient: c, exponent: e, r_squared: 1.0, max_log_residual: 0.0, n_points: 2 };
        let p = compute_optimal_alloc(&law(a, ea), &law(b, eb), 10f64.powf(h)).unwrap();
        prop_assert!((p.m_star / (p.d_star / p.n_star) - 1.0).abs() < 1e-12);
        let s1 = LossSurfaceFit::from_coefficients(16.22, 17.31, 0.11, 0.73, 0.67, 0.24);
        let s2 = LossSurfaceFit::from_coefficients(11.99, 13.35, 0.01, 0.53, 0.51, 0.29);
        let q = compute_optimal_alloc(&law(b, eb), &law(a, ea), 10f64.powf(h)).unwrap();
        let x = compare_at_budget(&s1, &s2, p.budget, &p, &q);
        let y = compare_at_budget(&s2, &s1, p.budget, &q, &p);
        prop_assert_eq!(x.margin, -y.margin);
    }

    #[test]
    fn grid_compute_linear_in_tokens(ratio in 1.0f64..3000.0) {
        let table = ConfigTable::new(vec![("x".to_string(), ArchConfig::xlstm(1024, 2752, 128, 256, 4, 24))]).unwrap();
        let n = count_params(&table.entries[0].config).unwrap().total as f64;
        let f = CostFactors::default();
        let g = plan_token_param_grid(&[n], &[ratio, 2.0 * ratio], Some(&table), 2048, &f, 3.0).unwrap();
        prop_assert!((g[1].c.unwrap() / g[0].c.unwrap() - 2.0).abs() < 1e-12);
    }
}
