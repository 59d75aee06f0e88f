// The single base-URL setting. Priority: explicit global set before the
// bundle loads, then a ?service= query parameter, then same-origin port 8000.

declare global {
  interface Window {
    VSM_SERVICE_URL?: string;
  }
}

export const DEFAULT_BASE_URL = "http://127.0.0.1:8000";

export function resolveBaseUrl(win?: Pick<Window, "VSM_SERVICE_URL" | "location">): string {
  if (!win) return DEFAULT_BASE_URL;
  if (win.VSM_SERVICE_URL) return win.VSM_SERVICE_URL.replace(/\/+$/, "");
  const fromQuery = new URLSearchParams(win.location?.search ?? "").get("service");
  if (fromQuery) return fromQuery.replace(/\/+$/, "");
  return DEFAULT_BASE_URL;
}
