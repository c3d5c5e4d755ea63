__int64 __fastcall fn_itoa(int a1, char *a2)
{
  char v3[16]; // [rsp+0h]
  int v4; // [rsp+14h]
  int v5; // [rsp+18h]
  unsigned int v6; // eax

  v4 = 0;
  v5 = 0;
  v6 = (unsigned int)a1;
  if ( a1 < 0 )
  {
    a2[v5] = 45;
    v5 = v5 + 1;
    v6 = (unsigned int)-a1;
  }
  if ( !v6 )
  {
    v3[v4] = 48;
    v4 = v4 + 1;
  }
  while ( v6 )
  {
    v3[v4] = (char)(v6 % 10 + 48);
    v4 = v4 + 1;
    v6 = v6 / 10;
  }
  while ( v4 > 0 )
  {
    v4 = v4 - 1;
    a2[v5] = v3[v4];
    v5 = v5 + 1;
  }
  a2[v5] = 0;
  return (unsigned int)v5;
}
