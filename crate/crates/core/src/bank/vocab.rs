//! Canonical feature vocabularies for the two reference test families.

pub const CHART_TYPE: &str = "chart_type";
pub const TASK: &str = "task";
pub const MISLEADER: &str = "misleader";

pub const VLAT_CHART_TYPES: [&str; 12] = [
    "Area Chart",
    "Bar Chart",
    "Bubble Chart",
    "Choropleth Map",
    "Histogram",
    "Line Chart",
    "Pie Chart",
    "Scatterplot",
    "Stacked Area Chart",
    "Stacked Bar Chart",
    "Treemap",
    "100% Stacked Bar Chart",
];

pub const VLAT_TASKS: [&str; 8] = [
    "Determine Range",
    "Identify the Hierarchical Structure",
    "Find Anomalies",
    "Find Clusters",
    "Find Correlations/Trends",
    "Find Extremum",
    "Make Comparisons",
    "Retrieve Value",
];

pub const CALVI_MISLEADERS: [&str; 11] = [
    "Cherry Picking",
    "Concealed Uncertainty",
    "Inappropriate Aggregation",
    "Manipulation of Scales - Inappropriate Order",
    "Manipulation of Scales - Inappropriate Scale Range",
    "Manipulation of Scales - Inappropriate Use of Scale Functions",
    "Manipulation of Scales - Unconventional Scale Directions",
    "Misleading Annotations",
    "Missing Data",
    "Missing Normalization",
    "Overplotting",
];

/// Answer option that lets a test taker decline to draw a conclusion.
pub const CANNOT_BE_INFERRED: &str = "Cannot be inferred/inadequate information";
