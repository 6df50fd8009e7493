//! Nearest neighbors in feature space, and the arithmetic behind user-study
//! tables: correlations, rating summaries and vote shares.

mod correlation;
mod knn;
mod survey;

pub use correlation::{average_ranks, pearson, spearman};
pub use knn::{nearest_neighbors, neighbors_of_row, Metric, NeighborResult};
pub use survey::{
    aggregate_ratings, load_rating_table, parse_rating_table, vote_shares, RatingSummary, RatingTable, Vote,
};
