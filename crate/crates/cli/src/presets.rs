//! Shipped experiment presets, one per reference table. The files live under
//! `presets/` and are embedded so the binary works from any directory.

pub const PRESETS: &[(&str, &str)] = &[
    (
        "bs_linear_table1",
        include_str!("../presets/bs_linear_table1.toml"),
    ),
    (
        "nonlinear_rates_table",
        include_str!("../presets/nonlinear_rates_table.toml"),
    ),
    (
        "heston_sabr_table",
        include_str!("../presets/heston_sabr_table.toml"),
    ),
    ("hyphyp_table", include_str!("../presets/hyphyp_table.toml")),
    (
        "sabr_full_table",
        include_str!("../presets/sabr_full_table.toml"),
    ),
    ("sabr_sparse", include_str!("../presets/sabr_sparse.toml")),
    (
        "basket_sparse",
        include_str!("../presets/basket_sparse.toml"),
    ),
    (
        "lsmc_nonlinear_bs",
        include_str!("../presets/lsmc_nonlinear_bs.toml"),
    ),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}
