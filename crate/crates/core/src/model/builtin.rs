//! The two-gene (TOC1 / LHY) clock of *Ostreococcus tauri* with five light
//! inputs and a light accumulator.

use indexmap::IndexMap;

use super::expr::{BinOp, Expr};
use super::{Network, Observable, Reaction};

pub const BUILTIN_OMEGA: f64 = 50.0;

#[allow(clippy::excessive_precision)]
const PARAMETERS: [(&str, f64); 19] = [
    ("acc_rate", 0.085759993119922787),
    ("R_toc1_lhy", 0.80473130211377397),
    ("H_toc1_lhy", 2.4786793492076216),
    ("L_toc1", 0.0001028030683282734),
    ("R_toc1_acc", 0.40030354494924164),
    ("D_mrna_toc1", 0.33395900070057227),
    ("T_toc1", 0.65069237578254624),
    ("Di_toc1_ia_l", 0.11696163098006726),
    ("Di_toc1_ia_d", 0.34434576584349563),
    ("D_toc1_a_l", 0.53999998111757508),
    ("D_toc1_a_d", 0.3587344573844497),
    ("H_lhy_toc1", 2.4123768479176113),
    ("R_lhy_toc1_a_l", 3.3859126401378155),
    ("R_lhy_toc1_a_d", 1.1074418532202324),
    ("D_mrna_lhy", 1.9405472466939),
    ("T_lhy", 6.5204407183218498),
    ("Di_lhy_cn", 7.0630744698933485),
    ("D_lhy_l", 0.34866585983482207),
    ("D_lhy_d", 0.21098655584281875),
];

/// Initial amounts in concentration units, in state-vector order.
#[allow(clippy::excessive_precision)]
const INITIAL: [(&str, f64); 7] = [
    ("acc", 0.99897249736755245),
    ("TOC1_mRNA", 1.9315264449894309e-06),
    ("TOC1_i", 0.34581773957827311),
    ("TOC1_a", 0.47960829226604956),
    ("LHY_mRNA", 9.9999999999999995e-07),
    ("LHY_c", 4.0361051173018776),
    ("LHY_n", 6.7029410613103796e-06),
];

const ACC: usize = 0;
const TOC1_MRNA: usize = 1;
const TOC1_I: usize = 2;
const TOC1_A: usize = 3;
const LHY_MRNA: usize = 4;
const LHY_C: usize = 5;
const LHY_N: usize = 6;

fn v(name: &str) -> Expr {
    Expr::var(name)
}

fn n(x: f64) -> Expr {
    Expr::num(x)
}

/// `light_time * day + (1 - light_time) * night`
fn by_light(day: Expr, night: Expr) -> Expr {
    v("light_time") * day + (n(1.0) - v("light_time")) * night
}

fn reaction(
    id: &str,
    reactants: &[usize],
    products: &[usize],
    modifiers: &[usize],
    rate: Expr,
) -> Reaction {
    Reaction {
        id: id.to_string(),
        reactants: reactants.iter().map(|&s| (s, 1)).collect(),
        products: products.iter().map(|&s| (s, 1)).collect(),
        modifiers: modifiers.to_vec(),
        rate,
    }
}

pub fn builtin_ostreococcus() -> Network {
    let omega = || v("omega");

    let tmp_toc1_transcription = v("L_toc1") + v("acc") * (v("R_toc1_acc") / omega());
    let toc1_a_decay = by_light(v("D_toc1_a_l"), v("D_toc1_a_d"));
    let toc1_i_a_conversion = by_light(v("Di_toc1_ia_l"), v("Di_toc1_ia_d"));
    let lhy_decay = || by_light(v("D_lhy_l"), v("D_lhy_d"));
    let lhy_toc1_reg = v("TOC1_a")
        * by_light(
            v("R_lhy_toc1_a_l") / omega(),
            v("R_lhy_toc1_a_d") / omega(),
        );

    let transc3 = omega() * tmp_toc1_transcription.clone()
        / (n(1.0)
            + tmp_toc1_transcription
            + (v("R_toc1_lhy") / omega() * v("LHY_n")).pow(v("H_toc1_lhy")));
    let reg_h = || Expr::bin(BinOp::Pow, lhy_toc1_reg.clone(), v("H_lhy_toc1"));
    let transc8 = omega() * reg_h() / (n(1.0) + reg_h());

    let reactions = vec![
        reaction("prod1", &[], &[ACC], &[], v("acc_rate") * omega() * v("light_time")),
        reaction("deg2", &[ACC], &[], &[], v("acc_rate") * v("acc")),
        reaction("transc3", &[], &[TOC1_MRNA], &[ACC, LHY_N], transc3),
        reaction("deg4", &[TOC1_A], &[], &[], toc1_a_decay * v("TOC1_a")),
        reaction("transl5", &[], &[TOC1_I], &[TOC1_MRNA], v("T_toc1") * v("TOC1_mRNA")),
        reaction("conv6", &[TOC1_I], &[TOC1_A], &[], toc1_i_a_conversion * v("TOC1_i")),
        reaction("deg7", &[TOC1_MRNA], &[], &[], v("D_mrna_toc1") * v("TOC1_mRNA")),
        reaction("transc8", &[], &[LHY_MRNA], &[TOC1_A], transc8),
        reaction("deg9", &[LHY_MRNA], &[], &[], v("D_mrna_lhy") * v("LHY_mRNA")),
        reaction("transl10", &[], &[LHY_C], &[LHY_MRNA], v("T_lhy") * v("LHY_mRNA")),
        reaction("transp11", &[LHY_C], &[LHY_N], &[], v("Di_lhy_cn") * v("LHY_c")),
        reaction("deg12", &[LHY_C], &[], &[], lhy_decay() * v("LHY_c")),
        reaction("deg13", &[LHY_N], &[], &[], lhy_decay() * v("LHY_n")),
    ];

    let observables = vec![
        Observable {
            name: "Total_LHY".into(),
            terms: vec![(1.0, LHY_C), (1.0, LHY_N)],
        },
        Observable {
            name: "Total_TOC1".into(),
            terms: vec![(1.0, TOC1_I), (1.0, TOC1_A)],
        },
    ];

    let parameters: IndexMap<String, f64> =
        PARAMETERS.iter().map(|&(k, v)| (k.to_string(), v)).collect();
    let species = INITIAL.iter().map(|&(k, c)| (k.to_string(), c)).collect();

    Network::new(species, reactions, parameters, BUILTIN_OMEGA, observables)
        .expect("built-in network is valid")
}
